/**
 * Service client: session upload, stats fetch, and the pose->frame stream.
 *
 * Network primitives (fetch and the WebSocket constructor) are injectable so
 * the client runs unchanged against the bundled mock server in tests.
 */

import {
  FrameMessage,
  Pose,
  PoseMessage,
  ServerMessage,
  SessionResponse,
  StatsResponse,
  clonePose,
} from "./protocol.js";

/** The subset of WebSocket the client relies on. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;
export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export type ConnectionStatus = "disconnected" | "connecting" | "connected" | "error";

export interface ViewerState {
  sessionId: string | null;
  status: ConnectionStatus;
  stats: StatsResponse | null;
  lastFrame: FrameMessage | null;
  /** Motion-to-photon latency of the last displayed frame, in ms. */
  lastLatencyMs: number | null;
  lastError: string | null;
}

export interface ClientOptions {
  fetchFn?: FetchLike;
  socketFactory?: SocketFactory;
  now?: () => number;
}

export class ViewerClient {
  readonly baseUrl: string;
  readonly state: ViewerState = {
    sessionId: null,
    status: "disconnected",
    stats: null,
    lastFrame: null,
    lastLatencyMs: null,
    lastError: null,
  };

  onFrame: ((frame: FrameMessage, latencyMs: number) => void) | null = null;
  onStatus: ((status: ConnectionStatus, error?: string) => void) | null = null;

  private fetchFn: FetchLike;
  private socketFactory: SocketFactory;
  private now: () => number;
  private socket: SocketLike | null = null;
  private seq = 0;
  private sentAt = new Map<number, number>();
  private lastDisplayedSeq = -1;
  private lastPose: Pose | null = null;

  constructor(baseUrl: string, options: ClientOptions = {}) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = options.fetchFn ?? ((url, init) => fetch(url, init));
    this.socketFactory =
      options.socketFactory ?? ((url) => new WebSocket(url) as unknown as SocketLike);
    this.now = options.now ?? (() => performance.now());
  }

  /** Fetch /stats and open the stream channel. */
  async connect(): Promise<StatsResponse> {
    this.setStatus("connecting");
    let stats: StatsResponse;
    try {
      const resp = await this.fetchFn(`${this.baseUrl}/stats`);
      if (!resp.ok) throw new Error(`stats request failed: ${resp.status}`);
      stats = (await resp.json()) as StatsResponse;
    } catch (err) {
      this.setStatus("error", String(err));
      throw err;
    }
    this.state.stats = stats;
    await this.openStream();
    return stats;
  }

  private streamUrl(): string {
    return this.baseUrl.replace(/^http/, "ws") + "/stream";
  }

  private openStream(): Promise<void> {
    return new Promise((resolve, reject) => {
      const socket = this.socketFactory(this.streamUrl());
      this.socket = socket;
      socket.onopen = () => {
        this.setStatus("connected");
        // re-request the current pose so a reconnect refreshes the frame
        if (this.lastPose && this.state.sessionId) this.sendPose(this.lastPose);
        resolve();
      };
      socket.onmessage = (ev) => this.handleMessage(ev.data);
      socket.onerror = () => {
        this.setStatus("error", "stream connection failed");
        reject(new Error("stream connection failed"));
      };
      socket.onclose = () => {
        if (this.state.status !== "error") this.setStatus("disconnected");
      };
    });
  }

  /** Upload a source image; the session id feeds every later pose message. */
  async uploadImage(data: Blob | ArrayBuffer | Uint8Array): Promise<SessionResponse> {
    const body = data instanceof Uint8Array
      ? new Uint8Array(data).buffer as ArrayBuffer
      : data;
    const resp = await this.fetchFn(`${this.baseUrl}/session`, {
      method: "POST",
      body: body as BodyInit,
    });
    if (!resp.ok) {
      const detail = await resp.text();
      throw new Error(`upload failed (${resp.status}): ${detail}`);
    }
    const session = (await resp.json()) as SessionResponse;
    this.state.sessionId = session.session_id;
    return session;
  }

  /** Send a pose on the stream; frames arrive via onFrame as they are ready. */
  sendPose(pose: Pose): number {
    if (!this.socket) throw new Error("not connected");
    if (!this.state.sessionId) throw new Error("no session: upload an image first");
    const seq = this.seq++;
    const msg: PoseMessage = {
      session_id: this.state.sessionId,
      seq,
      pose: clonePose(pose),
    };
    this.sentAt.set(seq, this.now());
    this.lastPose = clonePose(pose);
    this.socket.send(JSON.stringify(msg));
    return seq;
  }

  /** Close and reopen the stream; pose and session survive. */
  async reconnect(): Promise<void> {
    this.socket?.close();
    this.socket = null;
    await this.openStream();
  }

  disconnect(): void {
    this.socket?.close();
    this.socket = null;
    this.setStatus("disconnected");
  }

  get currentPose(): Pose | null {
    return this.lastPose ? clonePose(this.lastPose) : null;
  }

  private handleMessage(raw: string): void {
    let msg: ServerMessage;
    try {
      msg = JSON.parse(raw) as ServerMessage;
    } catch {
      return;
    }
    if (msg.type === "error") {
      this.state.lastError = msg.message;
      return;
    }
    // never display a frame older than one already shown
    if (msg.seq <= this.lastDisplayedSeq) return;
    this.lastDisplayedSeq = msg.seq;
    const sent = this.sentAt.get(msg.seq);
    const latency = sent === undefined ? -1 : this.now() - sent;
    for (const key of [...this.sentAt.keys()]) if (key <= msg.seq) this.sentAt.delete(key);
    this.state.lastFrame = msg;
    this.state.lastLatencyMs = latency;
    this.onFrame?.(msg, latency);
  }

  private setStatus(status: ConnectionStatus, error?: string): void {
    this.state.status = status;
    if (error !== undefined) this.state.lastError = error;
    this.onStatus?.(status, error);
  }
}
