/**
 * In-memory mock of the synthesis service, implementing the same contract as
 * the real backend: /stats, /session, and a stream channel with
 * newest-pose-wins coalescing and single-flight inference. Lets the viewer
 * and its tests run with no model and no network.
 */

import {
  FrameMessage,
  Pose,
  PoseMessage,
  StatsResponse,
} from "./protocol.js";
import { FetchLike, SocketFactory, SocketLike } from "./client.js";

const DEFAULT_STATS: StatsResponse = {
  p_min: [-0.1, -0.1, -0.1, -0.05, -0.05, -0.05],
  p_max: [0.1, 0.1, 0.1, 0.05, 0.05, 0.05],
  height: 64,
  width: 64,
  variant: "lite",
  encoder1: "pretrained_resnet",
  embedding_variant: "full",
  backbone_source: "mock",
};

/** 1x1 gray PNG; stands in for synthesized frames. */
const TINY_PNG_B64 =
  "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAAAAAA6fptVAAAACklEQVR4nGNiAAAABgADNjd8qAAAAABJRU5ErkJggg==";

class MockSocket implements SocketLike {
  onopen: (() => void) | null = null;
  onmessage: ((ev: { data: string }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  closed = false;

  constructor(private server: MockViewServer) {}

  send(data: string): void {
    if (this.closed) throw new Error("socket closed");
    this.server.receive(this, JSON.parse(data) as PoseMessage);
  }

  close(): void {
    if (this.closed) return;
    this.closed = true;
    this.onclose?.();
  }

  deliver(msg: unknown): void {
    if (!this.closed) this.onmessage?.({ data: JSON.stringify(msg) });
  }
}

export interface MockOptions {
  stats?: StatsResponse;
  /** Simulated per-frame inference time in ms. */
  inferenceMs?: number;
  /** When false, /stats and the stream fail (server-down scenarios). */
  reachable?: boolean;
}

export class MockViewServer {
  stats: StatsResponse;
  inferenceMs: number;
  reachable: boolean;
  sessions = new Set<string>();
  /** Every pose message the server received, in arrival order. */
  received: PoseMessage[] = [];
  /** Every frame the server produced, in completion order. */
  framesSent: FrameMessage[] = [];

  private nextSession = 1;
  private pending: { socket: MockSocket; msg: PoseMessage } | null = null;
  private busy = false;

  constructor(options: MockOptions = {}) {
    this.stats = options.stats ?? DEFAULT_STATS;
    this.inferenceMs = options.inferenceMs ?? 5;
    this.reachable = options.reachable ?? true;
  }

  /** fetch() substitute covering /stats and /session. */
  fetchFn: FetchLike = async (url: string) => {
    if (!this.reachable) throw new Error("connection refused");
    if (url.endsWith("/stats")) {
      return new Response(JSON.stringify(this.stats), { status: 200 });
    }
    if (url.endsWith("/session")) {
      const id = `mock-session-${this.nextSession++}`;
      this.sessions.add(id);
      return new Response(
        JSON.stringify({
          session_id: id,
          height: this.stats.height,
          width: this.stats.width,
          resized: false,
        }),
        { status: 200 },
      );
    }
    return new Response("not found", { status: 404 });
  };

  /** WebSocket substitute for the stream channel. */
  socketFactory: SocketFactory = () => {
    const socket = new MockSocket(this);
    queueMicrotask(() => {
      if (!this.reachable) socket.onerror?.(new Error("connection refused"));
      else socket.onopen?.();
    });
    return socket;
  };

  receive(socket: MockSocket, msg: PoseMessage): void {
    this.received.push(msg);
    this.pending = { socket, msg }; // newest pose wins
    void this.pump();
  }

  private async pump(): Promise<void> {
    if (this.busy) return;
    this.busy = true;
    while (this.pending) {
      const { socket, msg } = this.pending;
      this.pending = null;
      if (!this.sessions.has(msg.session_id)) {
        socket.deliver({ type: "error", message: `unknown session ${msg.session_id}` });
        continue;
      }
      await new Promise((r) => setTimeout(r, this.inferenceMs));
      const frame: FrameMessage = {
        type: "frame",
        seq: msg.seq,
        pose: msg.pose,
        inference_ms: this.inferenceMs,
        out_of_range: this.isOutOfRange(msg.pose),
        image_b64: TINY_PNG_B64,
      };
      this.framesSent.push(frame);
      socket.deliver(frame);
    }
    this.busy = false;
  }

  private isOutOfRange(pose: Pose): boolean {
    const values = [pose.x, pose.y, pose.z, pose.yaw, pose.pitch, pose.roll];
    return values.some(
      (v, i) => v < this.stats.p_min[i] || v > this.stats.p_max[i],
    );
  }
}
