// Client-side state: the latest server message plus connection and input
// bookkeeping. The client never simulates — rendering reflects the most
// recent state message and nothing else.

import type { AckMessage, StateMessage } from "./protocol";
import type { Key } from "./input";

/** A connection with no state message for this long is shown as down. */
export const STALE_MS = 1000;

/** Trail vertices closer than this are merged (display only). */
export const TRAIL_MIN_STEP_M = 0.05;

export interface ViewModel {
  state: StateMessage | null;
  lastStateAtMs: number | null;
  socketOpen: boolean;
  pressed: Set<Key>;
  /** Robot positions received while a recording session is live. */
  trail: [number, number][];
  lastAck: AckMessage | null;
}

export function createViewModel(): ViewModel {
  return {
    state: null,
    lastStateAtMs: null,
    socketOpen: false,
    pressed: new Set(),
    trail: [],
    lastAck: null,
  };
}

/** Ingest a state message (latest wins). */
export function applyState(vm: ViewModel, msg: StateMessage, nowMs: number): void {
  vm.state = msg;
  vm.lastStateAtMs = nowMs;
  if (msg.session.recording) {
    const p: [number, number] = [msg.robot[0], msg.robot[1]];
    const last = vm.trail[vm.trail.length - 1];
    if (last === undefined || Math.hypot(p[0] - last[0], p[1] - last[1]) >= TRAIL_MIN_STEP_M) {
      vm.trail.push(p);
    }
  } else if (vm.trail.length > 0) {
    vm.trail = [];
  }
}

export function connectionStatus(vm: ViewModel, nowMs: number): "connected" | "disconnected" {
  if (!vm.socketOpen || vm.lastStateAtMs === null) return "disconnected";
  return nowMs - vm.lastStateAtMs <= STALE_MS ? "connected" : "disconnected";
}

export function recording(vm: ViewModel): boolean {
  return vm.state !== null && vm.state.session.recording;
}

export function startEnabled(vm: ViewModel): boolean {
  return vm.state !== null && !vm.state.session.recording;
}

export function discardEnabled(vm: ViewModel): boolean {
  return recording(vm);
}

/** Save needs a live session with at least two logged waypoints. */
export function saveEnabled(vm: ViewModel): boolean {
  return recording(vm) && vm.state!.session.waypoints >= 2;
}
