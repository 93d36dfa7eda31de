/** Live steering session: socket lifecycle, frame ordering, action cadence. */

import {
  ActionKind, ChunkMessage, makeAction, makeStart, parseServerMessage,
} from "./protocol.js";

/** Minimal socket surface so tests can inject a fake. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: (() => void) | null;
  onclose: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export type ConnectionStatus = "connecting" | "live" | "error" | "closed";

export interface SessionEvents {
  onChunk?: (chunk: ChunkMessage) => void;
  onStatus?: (status: ConnectionStatus, detail?: string) => void;
}

export class Session {
  status: ConnectionStatus = "connecting";
  /** chunks retained in arrival order; arrival order must equal index order */
  chunks: ChunkMessage[] = [];
  /** HUD values: latency of the latest chunk, pose of its last frame */
  latencyMs: number | null = null;
  pose: number[] | null = null;
  lastError: string | null = null;
  skippedMessages = 0;

  private socket: SocketLike;
  private pendingAction: ActionKind = "static";
  private magnitude: number;

  constructor(
    url: string,
    sceneId: number,
    seed: number,
    private events: SessionEvents = {},
    factory: SocketFactory = (u) => new WebSocket(u) as unknown as SocketLike,
    magnitude = 0.25,
  ) {
    this.magnitude = magnitude;
    this.socket = factory(url);
    this.socket.onopen = () => {
      this.setStatus("live");
      this.socket.send(makeStart(sceneId, seed));
      this.sendAction();
    };
    this.socket.onmessage = (ev) => this.handleMessage(ev.data);
    this.socket.onerror = () => this.setStatus("error", "connection failed");
    this.socket.onclose = () => {
      if (this.status !== "error") this.setStatus("closed");
    };
  }

  /** Latest key wins; the action is re-sent at every chunk boundary. */
  setAction(kind: ActionKind): void {
    this.pendingAction = kind;
  }

  close(): void {
    this.socket.close();
  }

  private sendAction(): void {
    this.socket.send(makeAction(this.pendingAction, this.magnitude));
  }

  private handleMessage(raw: string): void {
    const msg = parseServerMessage(raw);
    if (msg === null) {
      // malformed server message: logged and skipped
      this.skippedMessages += 1;
      console.warn("skipping malformed server message");
      return;
    }
    if (msg.type === "error") {
      this.lastError = msg.message;
      this.setStatus("error", msg.message);
      return;
    }
    const expected =
      this.chunks.length === 0 ? msg.index : this.chunks[this.chunks.length - 1].index + 1;
    if (msg.index !== expected) {
      this.skippedMessages += 1;
      console.warn(`skipping out-of-order chunk ${msg.index}, expected ${expected}`);
      return;
    }
    this.chunks.push(msg);
    this.latencyMs = msg.latency_ms;
    const echo = msg.pose_echo[msg.pose_echo.length - 1];
    this.pose = echo === undefined ? null : [...echo];
    this.events.onChunk?.(msg);
    // one action message per chunk boundary
    this.sendAction();
  }

  private setStatus(status: ConnectionStatus, detail?: string): void {
    this.status = status;
    this.events.onStatus?.(status, detail);
  }
}
