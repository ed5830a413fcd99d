import { describe, expect, it } from "vitest";

import { makeViewport, render, worldToCanvas, type Ctx2D } from "../src/render";
import { applyState, createViewModel } from "../src/viewmodel";
import { stateMsg } from "./fixtures";

type Call = { name: string; args: unknown[] };

/** Records every draw call; enough structure for count/position asserts. */
function recordingCtx(): Ctx2D & { calls: Call[] } {
  const calls: Call[] = [];
  const log =
    (name: string) =>
    (...args: unknown[]) => {
      calls.push({ name, args });
    };
  return {
    calls,
    fillStyle: "",
    strokeStyle: "",
    lineWidth: 1,
    font: "",
    clearRect: log("clearRect"),
    fillRect: log("fillRect"),
    strokeRect: log("strokeRect"),
    beginPath: log("beginPath"),
    moveTo: log("moveTo"),
    lineTo: log("lineTo"),
    arc: log("arc"),
    closePath: log("closePath"),
    fill: log("fill"),
    stroke: log("stroke"),
    fillText: log("fillText"),
  };
}

const W = 1000;
const H = 520;

function count(ctx: { calls: Call[] }, name: string): number {
  return ctx.calls.filter((c) => c.name === name).length;
}

describe("coordinate mapping", () => {
  const vp = makeViewport([5.0, 4.0], W, H);

  it("flips y: world origin lands at the bottom-left", () => {
    const [x0, y0] = worldToCanvas([0, 0], vp);
    const [x1, y1] = worldToCanvas([5.0, 4.0], vp);
    expect(x1).toBeGreaterThan(x0);
    expect(y0).toBeGreaterThan(y1); // world up = canvas up (smaller y)
  });

  it("uses one fixed scale for both axes", () => {
    const [ax] = worldToCanvas([1, 0], vp);
    const [bx] = worldToCanvas([2, 0], vp);
    const [, ay] = worldToCanvas([0, 1], vp);
    const [, by] = worldToCanvas([0, 2], vp);
    expect(bx - ax).toBeCloseTo(vp.scale, 10);
    expect(ay - by).toBeCloseTo(vp.scale, 10);
  });

  it("fits the workspace inside the canvas", () => {
    for (const p of [[0, 0], [5, 0], [0, 4], [5, 4]] as const) {
      const [x, y] = worldToCanvas([p[0], p[1]], vp);
      expect(x).toBeGreaterThanOrEqual(0);
      expect(x).toBeLessThanOrEqual(W);
      expect(y).toBeGreaterThanOrEqual(0);
      expect(y).toBeLessThanOrEqual(H);
    }
  });
});

describe("render", () => {
  it("draws a waiting banner with no state", () => {
    const ctx = recordingCtx();
    render(createViewModel(), ctx, W, H, 0);
    expect(count(ctx, "fillText")).toBe(1);
    expect(count(ctx, "strokeRect")).toBe(0);
    expect(count(ctx, "arc")).toBe(0);
  });

  it("draws the workspace outline for an empty state", () => {
    const vm = createViewModel();
    applyState(vm, stateMsg({ boxes: [], receptacle: [0, 0, 1.5, 1.5] }), 0);
    const ctx = recordingCtx();
    render(vm, ctx, W, H, 0);
    // outline + receptacle border; no goal ring, one robot disc
    expect(count(ctx, "strokeRect")).toBe(2);
    expect(count(ctx, "arc")).toBe(1);
  });

  it("renders one rect per box (count parity with the message)", () => {
    const boxes: [number, number][] = Array.from({ length: 20 }, (_, i) => [
      0.5 + 0.2 * i,
      1.0 + 0.1 * i,
    ]);
    const vm = createViewModel();
    applyState(vm, stateMsg({ boxes }), 0);
    const ctx = recordingCtx();
    render(vm, ctx, W, H, 0);
    const base = recordingCtx();
    applyState(vm, stateMsg({ boxes: [] }), 0);
    render(vm, base, W, H, 0);
    expect(count(ctx, "fillRect") - count(base, "fillRect")).toBe(20);
  });

  it("marks the goal at its scaled position", () => {
    const vm = createViewModel();
    applyState(vm, stateMsg({ goal: [3.0, 1.0] }), 0);
    const ctx = recordingCtx();
    render(vm, ctx, W, H, 0);
    const arcs = ctx.calls.filter((c) => c.name === "arc");
    expect(arcs.length).toBe(2); // goal ring + robot disc
    const vp = makeViewport([5.0, 4.0], W, H);
    const [gx, gy] = worldToCanvas([3.0, 1.0], vp);
    const goalArc = arcs.find((c) => Math.abs((c.args[0] as number) - gx) < 1e-9);
    expect(goalArc).toBeDefined();
    expect(goalArc!.args[1] as number).toBeCloseTo(gy, 9);
  });

  it("draws the trail while recording", () => {
    const vm = createViewModel();
    const rec = (x: number) =>
      stateMsg({ robot: [x, 2.0, 0.0], session: { recording: true, waypoints: 0 } });
    applyState(vm, rec(1.0), 0);
    applyState(vm, rec(1.5), 0);
    applyState(vm, rec(2.0), 0);
    const ctx = recordingCtx();
    render(vm, ctx, W, H, 0);
    expect(count(ctx, "lineTo")).toBeGreaterThanOrEqual(2);
  });
});
