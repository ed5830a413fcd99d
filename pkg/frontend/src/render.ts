// Canvas drawing. Pure function of the view model; no retained state.

import type { StateMessage } from "./protocol";
import type { ViewModel } from "./viewmodel";
import { connectionStatus } from "./viewmodel";

// Display-only glyph sizes, matching the simulator defaults. The wire
// format carries centers, not footprints.
export const ROBOT_RADIUS_M = 0.15;
export const BOX_SIDE_M = 0.25;

const MARGIN_PX = 20;

// Structural subset of CanvasRenderingContext2D we draw with, so tests can
// substitute a recording stub.
export interface Ctx2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  closePath(): void;
  fill(): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
}

export interface Viewport {
  scale: number; // px per meter, fixed per frame
  offsetX: number; // px
  offsetY: number; // px
  heightM: number;
}

/** Fit the workspace into the canvas with a fixed px/m scale. */
export function makeViewport(
  workspace: [number, number],
  widthPx: number,
  heightPx: number,
): Viewport {
  const [wM, hM] = workspace;
  const scale = Math.min((widthPx - 2 * MARGIN_PX) / wM, (heightPx - 2 * MARGIN_PX) / hM);
  return {
    scale,
    offsetX: (widthPx - wM * scale) / 2,
    offsetY: (heightPx - hM * scale) / 2,
    heightM: hM,
  };
}

/**
 * World meters -> canvas pixels. The single place the coordinate mapping
 * lives: world y grows upward, canvas y grows downward, so y is flipped
 * about the workspace height.
 */
export function worldToCanvas(p: readonly [number, number], vp: Viewport): [number, number] {
  return [vp.offsetX + p[0] * vp.scale, vp.offsetY + (vp.heightM - p[1]) * vp.scale];
}

function rectPx(
  r: readonly [number, number, number, number],
  vp: Viewport,
): [number, number, number, number] {
  // (x0,y0,x1,y1) in meters; the top-left pixel corner is (x0, y1).
  const [x, y] = worldToCanvas([r[0], r[3]], vp);
  return [x, y, (r[2] - r[0]) * vp.scale, (r[3] - r[1]) * vp.scale];
}

function polyline(ctx: Ctx2D, pts: readonly (readonly [number, number])[], vp: Viewport): void {
  ctx.beginPath();
  pts.forEach((p, i) => {
    const [x, y] = worldToCanvas([p[0], p[1]], vp);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
}

function drawRobot(ctx: Ctx2D, state: StateMessage, vp: Viewport): void {
  const [x, y, theta] = state.robot;
  const [cx, cy] = worldToCanvas([x, y], vp);
  const r = ROBOT_RADIUS_M * vp.scale;
  ctx.fillStyle = "#4da3ff";
  ctx.beginPath();
  ctx.arc(cx, cy, r, 0, 2 * Math.PI);
  ctx.fill();
  // Heading wedge: canvas y-flip negates the angle.
  ctx.fillStyle = "#dceaff";
  ctx.beginPath();
  ctx.moveTo(cx + 1.4 * r * Math.cos(-theta), cy + 1.4 * r * Math.sin(-theta));
  ctx.lineTo(cx + 0.5 * r * Math.cos(-theta + 2.5), cy + 0.5 * r * Math.sin(-theta + 2.5));
  ctx.lineTo(cx + 0.5 * r * Math.cos(-theta - 2.5), cy + 0.5 * r * Math.sin(-theta - 2.5));
  ctx.closePath();
  ctx.fill();
}

function drawGoal(ctx: Ctx2D, goal: readonly [number, number], vp: Viewport): void {
  const [cx, cy] = worldToCanvas([goal[0], goal[1]], vp);
  const r = 0.12 * vp.scale;
  ctx.strokeStyle = "#ffd24d";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.arc(cx, cy, r, 0, 2 * Math.PI);
  ctx.stroke();
  ctx.beginPath();
  ctx.moveTo(cx - 1.6 * r, cy);
  ctx.lineTo(cx + 1.6 * r, cy);
  ctx.moveTo(cx, cy - 1.6 * r);
  ctx.lineTo(cx, cy + 1.6 * r);
  ctx.stroke();
}

export function render(
  vm: ViewModel,
  ctx: Ctx2D,
  widthPx: number,
  heightPx: number,
  nowMs: number = Date.now(),
): void {
  ctx.clearRect(0, 0, widthPx, heightPx);
  ctx.fillStyle = "#11151c";
  ctx.fillRect(0, 0, widthPx, heightPx);
  const state = vm.state;
  if (state === null) {
    ctx.fillStyle = "#8a93a3";
    ctx.font = "14px monospace";
    ctx.fillText("waiting for bridge...", MARGIN_PX, heightPx / 2);
    return;
  }
  const vp = makeViewport(state.workspace, widthPx, heightPx);

  // Workspace outline.
  ctx.strokeStyle = "#5a6472";
  ctx.lineWidth = 2;
  ctx.strokeRect(...rectPx([0, 0, state.workspace[0], state.workspace[1]], vp));

  // Receptacle.
  ctx.fillStyle = "rgba(90, 200, 120, 0.25)";
  ctx.fillRect(...rectPx(state.receptacle, vp));
  ctx.strokeStyle = "#5ac878";
  ctx.lineWidth = 1;
  ctx.strokeRect(...rectPx(state.receptacle, vp));

  // Obstacles.
  ctx.fillStyle = "#3a424e";
  for (const o of state.obstacles) ctx.fillRect(...rectPx(o, vp));

  // Planned path, then the recording trail on top.
  if (state.path !== null && state.path.length >= 2) {
    ctx.strokeStyle = "#8a93a3";
    ctx.lineWidth = 1;
    polyline(ctx, state.path, vp);
  }
  if (vm.trail.length >= 2) {
    ctx.strokeStyle = "#ff8f5a";
    ctx.lineWidth = 2;
    polyline(ctx, vm.trail, vp);
  }

  // Boxes (squares around their centers).
  ctx.fillStyle = "#c8a15a";
  const half = BOX_SIDE_M / 2;
  for (const [bx, by] of state.boxes) {
    ctx.fillRect(...rectPx([bx - half, by - half, bx + half, by + half], vp));
  }

  if (state.goal !== null) drawGoal(ctx, state.goal, vp);
  drawRobot(ctx, state, vp);

  // HUD line.
  ctx.fillStyle = "#8a93a3";
  ctx.font = "12px monospace";
  const status = connectionStatus(vm, nowMs);
  const sess = state.session.recording
    ? `recording (${state.session.waypoints} waypoints)`
    : "idle";
  ctx.fillText(`t=${state.t.toFixed(1)}s  ${status}  ${sess}`, MARGIN_PX, 14);
}
