/** DOM wiring: connect form, canvas playback, HUD, error banner with retry. */

import { KeyTracker } from "./input.js";
import { ChunkPainter } from "./render.js";
import { Session } from "./session.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

let session: Session | null = null;

function connect(): void {
  const addr = el<HTMLInputElement>("addr").value;
  const sceneId = Number(el<HTMLInputElement>("scene").value);
  const seed = Number(el<HTMLInputElement>("seed").value);
  const banner = el<HTMLDivElement>("banner");
  const painter = new ChunkPainter(el<HTMLCanvasElement>("view"));
  const keys = new KeyTracker();

  session?.close();
  banner.hidden = true;
  session = new Session(addr, sceneId, seed, {
    onChunk: (chunk) => {
      painter.paint(chunk);
      el<HTMLSpanElement>("hud-latency").textContent =
        `${chunk.latency_ms.toFixed(1)} ms`;
      el<HTMLSpanElement>("hud-chunk").textContent = String(chunk.index);
      const pose = chunk.pose_echo[chunk.pose_echo.length - 1];
      el<HTMLSpanElement>("hud-pose").textContent =
        pose === undefined ? "-" : pose.map((v) => v.toFixed(2)).join(" ");
    },
    onStatus: (status, detail) => {
      el<HTMLSpanElement>("hud-status").textContent = status;
      if (status === "error") {
        banner.hidden = false;
        el<HTMLSpanElement>("banner-text").textContent =
          detail ?? "connection error";
      }
    },
  });

  document.onkeydown = (ev) => {
    keys.down(ev.code);
    session?.setAction(keys.current());
    if (ev.code === "Space" || ev.code.startsWith("Arrow")) ev.preventDefault();
  };
  document.onkeyup = (ev) => {
    keys.up(ev.code);
    session?.setAction(keys.current());
  };
}

el<HTMLButtonElement>("connect").onclick = connect;
el<HTMLButtonElement>("retry").onclick = connect;
