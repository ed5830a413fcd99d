// DOM wiring: one canvas, three session buttons, a status line.
// Bridge URL comes from ?ws=... or ?port=... (default 8765 on this host).

import { TeleopClient } from "./client";
import { render, type Ctx2D } from "./render";
import { connectionStatus, discardEnabled, saveEnabled, startEnabled } from "./viewmodel";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node as T;
}

const params = new URLSearchParams(window.location.search);
const url =
  params.get("ws") ??
  `ws://${window.location.hostname || "127.0.0.1"}:${params.get("port") ?? "8765"}`;

const canvas = el<HTMLCanvasElement>("world");
const ctx = canvas.getContext("2d");
if (ctx === null) throw new Error("canvas 2d context unavailable");

const statusEl = el<HTMLSpanElement>("status");
const startBtn = el<HTMLButtonElement>("start");
const saveBtn = el<HTMLButtonElement>("save");
const discardBtn = el<HTMLButtonElement>("discard");

const client = new TeleopClient(url);
client.connect();

startBtn.addEventListener("click", () => client.startSession());
saveBtn.addEventListener("click", () => client.saveSession());
discardBtn.addEventListener("click", () => client.discardSession());

const KEYS_STEER = new Set([
  "ArrowUp", "ArrowDown", "ArrowLeft", "ArrowRight", "KeyW", "KeyA", "KeyS", "KeyD",
]);

window.addEventListener("keydown", (ev) => {
  if (ev.repeat) {
    if (KEYS_STEER.has(ev.code)) ev.preventDefault();
    return;
  }
  if (client.keyDown(ev.code)) ev.preventDefault();
});
window.addEventListener("keyup", (ev) => {
  if (client.keyUp(ev.code)) ev.preventDefault();
});
window.addEventListener("blur", () => client.releaseAll());

function frame(): void {
  render(client.vm, ctx as unknown as Ctx2D, canvas.width, canvas.height);
  const status = connectionStatus(client.vm, Date.now());
  const acked = client.vm.lastAck;
  statusEl.textContent =
    `${url}  ${status}` +
    (acked !== null ? `  last ack: ${acked.action} ${acked.ok ? "ok" : "refused"} (${acked.records} saved)` : "");
  statusEl.className = status;
  startBtn.disabled = !startEnabled(client.vm);
  saveBtn.disabled = !saveEnabled(client.vm);
  discardBtn.disabled = !discardEnabled(client.vm);
  window.requestAnimationFrame(frame);
}
window.requestAnimationFrame(frame);
