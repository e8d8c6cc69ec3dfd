import { describe, expect, it } from "vitest";

import { PoseController, boundsFromStats, centerPose } from "../src/controls.js";
import { StatsResponse } from "../src/protocol.js";

const stats: StatsResponse = {
  p_min: [-0.2, -0.1, 0.0, -0.5, -0.25, -1.0],
  p_max: [0.2, 0.3, 1.0, 0.5, 0.25, 1.0],
  height: 64,
  width: 64,
  variant: "lite",
  encoder1: "none",
  embedding_variant: "full",
  backbone_source: "mock",
};

describe("PoseController", () => {
  it("starts at the center of the bounds", () => {
    const c = new PoseController(boundsFromStats(stats));
    expect(c.pose.x).toBeCloseTo(0.0, 12);
    expect(c.pose.y).toBeCloseTo(0.1, 12);
    expect(c.pose.z).toBeCloseTo(0.5, 12);
  });

  it("full-width drag sweeps x across its whole bound range", () => {
    const bounds = boundsFromStats(stats);
    const c = new PoseController(bounds, { ...centerPose(bounds), x: bounds.min.x });
    c.dragPlane(400, 0, 400); // one full widget width
    expect(c.pose.x).toBeCloseTo(bounds.max.x, 10);
  });

  it("reset returns to the bounds center and clears the range flag", () => {
    const c = new PoseController(boundsFromStats(stats));
    c.dragPlane(1000, 500, 400);
    expect(c.pose).not.toEqual(centerPose(c.bounds));
    c.reset();
    expect(c.pose).toEqual(centerPose(c.bounds));
    expect(c.outOfRange).toBe(false);
  });

  it("soft clamps with an out-of-range flag instead of hard stopping", () => {
    const c = new PoseController(boundsFromStats(stats));
    c.setComponent("x", 0.21); // just past max 0.2, inside the overshoot pad
    expect(c.outOfRange).toBe(true);
    expect(c.pose.x).toBeCloseTo(0.21, 12);
    c.setComponent("x", 99); // far past: clamped to max + 10% of span
    expect(c.pose.x).toBeCloseTo(0.2 + 0.04, 12);
    c.setComponent("x", 0.0);
    expect(c.outOfRange).toBe(false);
  });

  it("wheel moves z by 5% of its span per notch", () => {
    const c = new PoseController(boundsFromStats(stats));
    const z0 = c.pose.z;
    c.wheel(2);
    expect(c.pose.z).toBeCloseTo(z0 + 0.1, 12);
  });

  it("orbit and roll drags touch only rotation components", () => {
    const c = new PoseController(boundsFromStats(stats));
    const before = { ...c.pose };
    c.orbitDrag(100, 50, 400);
    expect(c.pose.yaw).not.toBe(before.yaw);
    expect(c.pose.pitch).not.toBe(before.pitch);
    expect(c.pose.x).toBe(before.x);
    c.rollDrag(40, 400);
    expect(c.pose.roll).not.toBe(before.roll);
  });
});
