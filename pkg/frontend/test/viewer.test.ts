import { describe, expect, test } from "vitest";
import { DEFAULT_ROTATION_RATE_DEG_PER_SEC, DualViewState, ViewerState } from "../src/viewer.js";

describe("ViewerState", () => {
  test("default auto-rotation covers a full turn within 60s idle", () => {
    const s = new ViewerState();
    expect(s.rotationRateDegPerSec).toBe(DEFAULT_ROTATION_RATE_DEG_PER_SEC);
    for (let i = 0; i < 600; i++) s.advance(0.1); // 60 s in 100 ms frames
    expect(s.degreesTraveled).toBeGreaterThanOrEqual(360);
  });

  test("azimuth stays wrapped to [0, 360)", () => {
    const s = new ViewerState();
    s.advance(1000);
    expect(s.azimuthDeg).toBeGreaterThanOrEqual(0);
    expect(s.azimuthDeg).toBeLessThan(360);
    s.scrub(-720.5);
    expect(s.azimuthDeg).toBeGreaterThanOrEqual(0);
    expect(s.azimuthDeg).toBeLessThan(360);
  });

  test("pause freezes rotation; scrub still works", () => {
    const s = new ViewerState();
    s.advance(2);
    const frozen = s.azimuthDeg;
    s.paused = true;
    s.advance(10);
    expect(s.azimuthDeg).toBe(frozen);
    s.scrub(15);
    expect(s.azimuthDeg).toBeCloseTo(frozen + 15, 12);
  });
});

describe("DualViewState linking", () => {
  test("linked panes share identical params through rotation and light changes", () => {
    const dual = new DualViewState();
    expect(dual.linked).toBe(true);
    for (let i = 0; i < 50; i++) {
      dual.advance(0.016 * (1 + (i % 5)));
      if (i % 10 === 0) dual.pane("left").lightAzimuthDeg = (i * 37) % 360;
      if (i % 13 === 0) dual.pane("left").lightElevationDeg = -40 + (i % 80);
      expect(dual.params("left")).toEqual(dual.params("right"));
    }
  });

  test("pause applies to both panes at the same orientation", () => {
    const dual = new DualViewState();
    dual.advance(3.5);
    dual.pane("left").paused = true;
    const left = dual.params("left");
    dual.advance(5);
    expect(dual.params("left")).toEqual(left);
    expect(dual.params("right")).toEqual(left);
  });

  test("unlink lets the right pane diverge; relink restores fairness", () => {
    const dual = new DualViewState();
    dual.advance(1);
    dual.unlink();
    expect(dual.linked).toBe(false);
    dual.pane("right").lightAzimuthDeg = 123;
    expect(dual.params("left")).not.toEqual(dual.params("right"));
    dual.relink();
    expect(dual.linked).toBe(true);
    expect(dual.params("left")).toEqual(dual.params("right"));
  });
});
