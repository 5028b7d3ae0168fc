/** Viewer state shared by the two comparison panes.
 *
 * The comparison must be viewpoint-fair: while the panes are linked
 * (the default) both render from the exact same camera and light
 * parameters, updated from a single state object. Unlinking clones the
 * state for the right pane so it can diverge; relinking snaps it back.
 */

export const DEFAULT_ROTATION_RATE_DEG_PER_SEC = 12;

export interface ViewParams {
  azimuthDeg: number;
  elevationDeg: number;
  cameraDistance: number;
  lightAzimuthDeg: number;
  lightElevationDeg: number;
}

export class ViewerState {
  rotationRateDegPerSec = DEFAULT_ROTATION_RATE_DEG_PER_SEC;
  paused = false;
  azimuthDeg = 0;
  elevationDeg = 15;
  cameraDistance = 2.5;
  lightAzimuthDeg = 45;
  lightElevationDeg = 35;
  /** Cumulative rotation since load, not wrapped; used for coverage checks. */
  degreesTraveled = 0;

  /** Advance the auto-rotation by `dtSeconds` of wall time. */
  advance(dtSeconds: number): void {
    if (this.paused || dtSeconds <= 0) return;
    const step = this.rotationRateDegPerSec * dtSeconds;
    this.azimuthDeg = wrap(this.azimuthDeg + step);
    this.degreesTraveled += step;
  }

  /** Manual scrub (drag / arrow keys); works while paused. */
  scrub(deltaDeg: number): void {
    this.azimuthDeg = wrap(this.azimuthDeg + deltaDeg);
  }

  params(): ViewParams {
    return {
      azimuthDeg: this.azimuthDeg,
      elevationDeg: this.elevationDeg,
      cameraDistance: this.cameraDistance,
      lightAzimuthDeg: this.lightAzimuthDeg,
      lightElevationDeg: this.lightElevationDeg,
    };
  }

  clone(): ViewerState {
    const s = new ViewerState();
    Object.assign(s, this);
    return s;
  }
}

export type Side = "left" | "right";

export class DualViewState {
  private readonly shared = new ViewerState();
  private detachedRight: ViewerState | null = null;

  get linked(): boolean {
    return this.detachedRight === null;
  }

  /** State object driving a pane; while linked both sides share one. */
  pane(side: Side): ViewerState {
    if (side === "right" && this.detachedRight !== null) return this.detachedRight;
    return this.shared;
  }

  params(side: Side): ViewParams {
    return this.pane(side).params();
  }

  unlink(): void {
    if (this.detachedRight === null) this.detachedRight = this.shared.clone();
  }

  relink(): void {
    this.detachedRight = null;
  }

  advance(dtSeconds: number): void {
    this.shared.advance(dtSeconds);
    this.detachedRight?.advance(dtSeconds);
  }
}

function wrap(deg: number): number {
  return ((deg % 360) + 360) % 360;
}
