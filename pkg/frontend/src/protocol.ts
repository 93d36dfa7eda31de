/** Wire protocol of the rollout server: JSON messages over a websocket. */

export type ActionKind =
  | "forward" | "back" | "left" | "right"
  | "pan_left" | "pan_right" | "tilt_up" | "tilt_down" | "static";

export interface StartMessage {
  type: "start";
  scene_id: number;
  seed: number;
}

export interface ActionMessage {
  type: "action";
  kind: ActionKind;
  magnitude: number;
}

export interface ChunkMessage {
  type: "chunk";
  index: number;
  width: number;
  height: number;
  /** base64-encoded RGB8, one entry per frame */
  frames: string[];
  /** row-major 4x4 camera-from-world matrix per frame, 16 floats */
  pose_echo: number[][];
  latency_ms: number;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export type ServerMessage = ChunkMessage | ErrorMessage;

const ACTION_KINDS: ReadonlySet<string> = new Set([
  "forward", "back", "left", "right",
  "pan_left", "pan_right", "tilt_up", "tilt_down", "static",
]);

/** Parse and validate a server message; returns null for malformed input. */
export function parseServerMessage(raw: string): ServerMessage | null {
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  const m = msg as Record<string, unknown>;
  if (m.type === "error" && typeof m.message === "string") {
    return { type: "error", message: m.message };
  }
  if (
    m.type === "chunk" &&
    typeof m.index === "number" &&
    typeof m.width === "number" &&
    typeof m.height === "number" &&
    Array.isArray(m.frames) &&
    m.frames.every((f) => typeof f === "string") &&
    Array.isArray(m.pose_echo) &&
    typeof m.latency_ms === "number"
  ) {
    return m as unknown as ChunkMessage;
  }
  return null;
}

/** base64 RGB8 -> flat byte array of length width*height*3. */
export function decodeFrame(b64: string): Uint8ClampedArray {
  const bin = typeof atob === "function"
    ? atob(b64)
    : Buffer.from(b64, "base64").toString("binary");
  const out = new Uint8ClampedArray(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

/** RGB8 bytes -> RGBA bytes suitable for canvas ImageData. */
export function rgbToRgba(rgb: Uint8ClampedArray): Uint8ClampedArray<ArrayBuffer> {
  const n = rgb.length / 3;
  const out = new Uint8ClampedArray(new ArrayBuffer(n * 4));
  for (let i = 0; i < n; i++) {
    out[4 * i] = rgb[3 * i];
    out[4 * i + 1] = rgb[3 * i + 1];
    out[4 * i + 2] = rgb[3 * i + 2];
    out[4 * i + 3] = 255;
  }
  return out;
}

export function makeStart(sceneId: number, seed: number): string {
  return JSON.stringify({ type: "start", scene_id: sceneId, seed } satisfies StartMessage);
}

export function makeAction(kind: ActionKind, magnitude: number): string {
  if (!ACTION_KINDS.has(kind)) throw new Error(`unknown action kind ${kind}`);
  return JSON.stringify({ type: "action", kind, magnitude } satisfies ActionMessage);
}
