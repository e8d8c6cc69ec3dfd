/** Wire types for the synthesis service (HTTP + stream channel). */

export interface Pose {
  x: number;
  y: number;
  z: number;
  yaw: number;
  pitch: number;
  roll: number;
}

export const POSE_KEYS: (keyof Pose)[] = ["x", "y", "z", "yaw", "pitch", "roll"];

export const zeroPose = (): Pose => ({ x: 0, y: 0, z: 0, yaw: 0, pitch: 0, roll: 0 });

export interface StatsResponse {
  p_min: number[];
  p_max: number[];
  height: number;
  width: number;
  variant: string;
  encoder1: string;
  embedding_variant: string;
  backbone_source: string;
}

export interface SessionResponse {
  session_id: string;
  height: number;
  width: number;
  resized: boolean;
}

export interface PoseMessage {
  session_id: string;
  seq: number;
  pose: Pose;
}

export interface FrameMessage {
  type: "frame";
  seq: number;
  pose: Pose;
  inference_ms: number;
  out_of_range: boolean;
  image_b64: string;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export type ServerMessage = FrameMessage | ErrorMessage;

export function clonePose(p: Pose): Pose {
  return { ...p };
}

export function posesEqual(a: Pose, b: Pose): boolean {
  return POSE_KEYS.every((k) => a[k] === b[k]);
}
