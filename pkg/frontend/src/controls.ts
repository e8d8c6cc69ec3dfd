/**
 * Pose steering state: maps pointer/slider input to 6-DoF poses bounded by
 * the served stats. Pure logic, no DOM; the app layer wires events to it.
 */

import { Pose, POSE_KEYS, StatsResponse, clonePose } from "./protocol.js";

/** Fraction of the bound span a pose may overshoot before hard clamping. */
const OVERSHOOT = 0.1;

export interface PoseBounds {
  min: Pose;
  max: Pose;
}

export function boundsFromStats(stats: StatsResponse): PoseBounds {
  const read = (values: number[]): Pose => ({
    x: values[0],
    y: values[1],
    z: values[2],
    yaw: values[3],
    pitch: values[4],
    roll: values[5],
  });
  return { min: read(stats.p_min), max: read(stats.p_max) };
}

export function centerPose(bounds: PoseBounds): Pose {
  const c = {} as Pose;
  for (const k of POSE_KEYS) c[k] = (bounds.min[k] + bounds.max[k]) / 2;
  return c;
}

export class PoseController {
  readonly bounds: PoseBounds;
  pose: Pose;
  /** True when the last update pushed any component outside the bounds. */
  outOfRange = false;

  constructor(bounds: PoseBounds, initial?: Pose) {
    this.bounds = bounds;
    this.pose = initial ? clonePose(initial) : centerPose(bounds);
  }

  span(key: keyof Pose): number {
    return this.bounds.max[key] - this.bounds.min[key];
  }

  /** Soft clamp: allow a small overshoot (flagged) so extrapolation is reachable. */
  private apply(key: keyof Pose, value: number): void {
    const pad = this.span(key) * OVERSHOOT;
    const lo = this.bounds.min[key] - pad;
    const hi = this.bounds.max[key] + pad;
    this.pose[key] = Math.min(hi, Math.max(lo, value));
    this.outOfRange = POSE_KEYS.some(
      (k) => this.pose[k] < this.bounds.min[k] || this.pose[k] > this.bounds.max[k],
    );
  }

  /**
   * Primary drag plane: dragging across the full widget width sweeps x over
   * its entire bound span; same for y vertically.
   */
  dragPlane(dxPx: number, dyPx: number, widgetPx: number): void {
    this.apply("x", this.pose.x + (dxPx / widgetPx) * this.span("x"));
    this.apply("y", this.pose.y + (dyPx / widgetPx) * this.span("y"));
  }

  /** Wheel/scroll: one notch moves z by 5% of its span. */
  wheel(notches: number): void {
    this.apply("z", this.pose.z + notches * 0.05 * this.span("z"));
  }

  /** Secondary drag (right button / ctrl): yaw from dx, pitch from dy. */
  orbitDrag(dxPx: number, dyPx: number, widgetPx: number): void {
    this.apply("yaw", this.pose.yaw + (dxPx / widgetPx) * this.span("yaw"));
    this.apply("pitch", this.pose.pitch + (dyPx / widgetPx) * this.span("pitch"));
  }

  /** Modifier drag (shift): roll from horizontal motion. */
  rollDrag(dxPx: number, widgetPx: number): void {
    this.apply("roll", this.pose.roll + (dxPx / widgetPx) * this.span("roll"));
  }

  /** Slider input: set one component directly. */
  setComponent(key: keyof Pose, value: number): void {
    this.apply(key, value);
  }

  /** Reset to the center of the bounds (the 0.5-normalized pose). */
  reset(): void {
    this.pose = centerPose(this.bounds);
    this.outOfRange = false;
  }
}
