/** three.js rendering for one comparison pane.
 *
 * Deliberately plain shading — per-vertex color with a single
 * directional light plus a small ambient term, no shadows or tone
 * mapping — so the renderer adds as little bias as possible to the
 * comparison.
 */

import * as THREE from "three";
import { MeshData } from "./mesh.js";
import { ViewParams } from "./viewer.js";

export class MeshPane {
  private readonly renderer: THREE.WebGLRenderer;
  private readonly scene = new THREE.Scene();
  private readonly camera: THREE.PerspectiveCamera;
  private readonly light: THREE.DirectionalLight;
  private mesh: THREE.Mesh | null = null;

  constructor(private readonly canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.scene.background = new THREE.Color(0x181a1f);
    this.camera = new THREE.PerspectiveCamera(40, 1, 0.01, 100);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.35));
    this.light = new THREE.DirectionalLight(0xffffff, 0.9);
    this.scene.add(this.light);
  }

  setMesh(data: MeshData): void {
    if (this.mesh) {
      this.scene.remove(this.mesh);
      this.mesh.geometry.dispose();
      (this.mesh.material as THREE.Material).dispose();
    }
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.BufferAttribute(data.positions, 3));
    geometry.setAttribute("color", new THREE.BufferAttribute(data.colors, 3));
    if (data.indices.length > 0) {
      geometry.setIndex(new THREE.BufferAttribute(data.indices, 1));
    }
    geometry.computeVertexNormals();
    centerAndScale(geometry);
    const material = new THREE.MeshLambertMaterial({
      vertexColors: true,
      side: THREE.DoubleSide,
    });
    this.mesh = new THREE.Mesh(geometry, material);
    this.scene.add(this.mesh);
  }

  clearMesh(): void {
    if (this.mesh) {
      this.scene.remove(this.mesh);
      this.mesh = null;
    }
  }

  /** Apply shared view parameters and draw one frame. */
  render(params: ViewParams): void {
    const w = this.canvas.clientWidth || this.canvas.width;
    const h = this.canvas.clientHeight || this.canvas.height;
    if (this.canvas.width !== w || this.canvas.height !== h) {
      this.renderer.setSize(w, h, false);
    }
    this.camera.aspect = w / Math.max(1, h);
    this.camera.updateProjectionMatrix();

    const az = (params.azimuthDeg * Math.PI) / 180;
    const el = (params.elevationDeg * Math.PI) / 180;
    const d = params.cameraDistance;
    this.camera.position.set(
      d * Math.cos(el) * Math.sin(az),
      d * Math.sin(el),
      d * Math.cos(el) * Math.cos(az),
    );
    this.camera.lookAt(0, 0, 0);

    const laz = (params.lightAzimuthDeg * Math.PI) / 180;
    const lel = (params.lightElevationDeg * Math.PI) / 180;
    this.light.position.set(
      5 * Math.cos(lel) * Math.sin(laz),
      5 * Math.sin(lel),
      5 * Math.cos(lel) * Math.cos(laz),
    );

    this.renderer.render(this.scene, this.camera);
  }
}

function centerAndScale(geometry: THREE.BufferGeometry): void {
  geometry.computeBoundingSphere();
  const sphere = geometry.boundingSphere;
  if (!sphere || sphere.radius === 0) return;
  geometry.translate(-sphere.center.x, -sphere.center.y, -sphere.center.z);
  geometry.scale(1 / sphere.radius, 1 / sphere.radius, 1 / sphere.radius);
}
