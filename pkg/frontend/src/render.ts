/** Raw RGB8 painting onto a canvas with nearest-neighbor upscale. */

import { ChunkMessage, decodeFrame, rgbToRgba } from "./protocol.js";

export class ChunkPainter {
  private ctx: CanvasRenderingContext2D;
  private staging: HTMLCanvasElement;
  private queue: ImageData[] = [];
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(private canvas: HTMLCanvasElement, private frameMs = 100) {
    const ctx = canvas.getContext("2d");
    if (ctx === null) throw new Error("2d canvas context unavailable");
    this.ctx = ctx;
    this.ctx.imageSmoothingEnabled = false;
    this.staging = document.createElement("canvas");
  }

  /** Queue every frame of the chunk; playback is paced off the event loop so
   * decode never blocks input handling. */
  paint(chunk: ChunkMessage): void {
    for (const b64 of chunk.frames) {
      const rgba = rgbToRgba(decodeFrame(b64));
      this.queue.push(new ImageData(rgba, chunk.width, chunk.height));
    }
    if (this.timer === null) {
      this.timer = setInterval(() => this.tick(), this.frameMs);
      this.tick();
    }
  }

  private tick(): void {
    const frame = this.queue.shift();
    if (frame === undefined) {
      if (this.timer !== null) clearInterval(this.timer);
      this.timer = null;
      return;
    }
    this.staging.width = frame.width;
    this.staging.height = frame.height;
    this.staging.getContext("2d")!.putImageData(frame, 0, 0);
    this.ctx.imageSmoothingEnabled = false;
    this.ctx.drawImage(this.staging, 0, 0, this.canvas.width, this.canvas.height);
  }
}
