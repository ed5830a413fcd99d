// Keyboard -> velocity command. Discrete levels keep operator dynamics
// reproducible across demonstrators.

export type Key = "up" | "down" | "left" | "right";

// KeyboardEvent.code -> logical key; arrows and WASD both steer.
export const KEY_BINDINGS: Readonly<Record<string, Key>> = {
  ArrowUp: "up",
  KeyW: "up",
  ArrowDown: "down",
  KeyS: "down",
  ArrowLeft: "left",
  KeyA: "left",
  ArrowRight: "right",
  KeyD: "right",
};

export const V_STEP = 0.3; // m/s
export const W_STEP = 1.0; // rad/s

/**
 * Map the held-key set to {v, w}. Opposing keys cancel (forward+back
 * gives v=0 but leaves w alone, and symmetrically for left+right).
 * Left turn is +w: counterclockwise-positive, matching the simulator's
 * heading convention.
 */
export function inputToCommand(pressed: ReadonlySet<Key>): { v: number; w: number } {
  const fwd = pressed.has("up");
  const back = pressed.has("down");
  const left = pressed.has("left");
  const right = pressed.has("right");
  const v = fwd === back ? 0 : fwd ? V_STEP : -V_STEP;
  const w = left === right ? 0 : left ? W_STEP : -W_STEP;
  return { v, w };
}
