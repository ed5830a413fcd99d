import { describe, expect, it } from "vitest";

import { inputToCommand, KEY_BINDINGS, V_STEP, W_STEP, type Key } from "../src/input";

function cmd(...keys: Key[]) {
  return inputToCommand(new Set(keys));
}

describe("key set -> {v, w}", () => {
  it("maps the full table", () => {
    expect(cmd()).toEqual({ v: 0, w: 0 });
    expect(cmd("up")).toEqual({ v: V_STEP, w: 0 });
    expect(cmd("down")).toEqual({ v: -V_STEP, w: 0 });
    expect(cmd("left")).toEqual({ v: 0, w: W_STEP });
    expect(cmd("right")).toEqual({ v: 0, w: -W_STEP });
    expect(cmd("up", "left")).toEqual({ v: V_STEP, w: W_STEP });
    expect(cmd("down", "right")).toEqual({ v: -V_STEP, w: -W_STEP });
  });

  it("cancels opposing keys independently per axis", () => {
    expect(cmd("up", "down")).toEqual({ v: 0, w: 0 });
    expect(cmd("up", "down", "left")).toEqual({ v: 0, w: W_STEP });
    expect(cmd("left", "right")).toEqual({ v: 0, w: 0 });
    expect(cmd("left", "right", "down")).toEqual({ v: -V_STEP, w: 0 });
    expect(cmd("up", "down", "left", "right")).toEqual({ v: 0, w: 0 });
  });

  it("uses only the discrete levels", () => {
    const speeds = new Set<number>();
    const turns = new Set<number>();
    const keys: Key[] = ["up", "down", "left", "right"];
    for (let mask = 0; mask < 16; mask++) {
      const held = new Set(keys.filter((_, i) => mask & (1 << i)));
      const { v, w } = inputToCommand(held);
      speeds.add(v);
      turns.add(w);
    }
    expect([...speeds].sort((a, b) => a - b)).toEqual([-V_STEP, 0, V_STEP]);
    expect([...turns].sort((a, b) => a - b)).toEqual([-W_STEP, 0, W_STEP]);
  });

  it("binds both arrows and WASD", () => {
    expect(KEY_BINDINGS.ArrowUp).toBe("up");
    expect(KEY_BINDINGS.KeyW).toBe("up");
    expect(KEY_BINDINGS.ArrowDown).toBe("down");
    expect(KEY_BINDINGS.KeyS).toBe("down");
    expect(KEY_BINDINGS.ArrowLeft).toBe("left");
    expect(KEY_BINDINGS.KeyA).toBe("left");
    expect(KEY_BINDINGS.ArrowRight).toBe("right");
    expect(KEY_BINDINGS.KeyD).toBe("right");
  });
});
