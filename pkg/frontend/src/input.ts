/** Keyboard-to-camera-action mapping: WASD moves, arrows pan/tilt, space holds. */

import type { ActionKind } from "./protocol.js";

const KEY_TO_ACTION: Record<string, ActionKind> = {
  KeyW: "forward",
  KeyA: "left",
  KeyS: "back",
  KeyD: "right",
  ArrowLeft: "pan_left",
  ArrowRight: "pan_right",
  ArrowUp: "tilt_up",
  ArrowDown: "tilt_down",
  Space: "static",
};

/** Map a KeyboardEvent.code to an action kind; null for unmapped keys. */
export function keyToAction(code: string): ActionKind | null {
  return KEY_TO_ACTION[code] ?? null;
}

/**
 * Tracks held keys; the most recently pressed mapped key wins, and releasing
 * it falls back to the next held key (or "static" with nothing held).
 */
export class KeyTracker {
  private held: string[] = [];

  down(code: string): void {
    if (keyToAction(code) === null) return;
    this.up(code);
    this.held.push(code);
  }

  up(code: string): void {
    this.held = this.held.filter((c) => c !== code);
  }

  current(): ActionKind {
    const code = this.held[this.held.length - 1];
    return code === undefined ? "static" : keyToAction(code)!;
  }
}
