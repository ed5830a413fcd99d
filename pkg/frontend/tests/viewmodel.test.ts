import { describe, expect, it } from "vitest";

import {
  applyState,
  connectionStatus,
  createViewModel,
  saveEnabled,
  startEnabled,
  discardEnabled,
  STALE_MS,
  TRAIL_MIN_STEP_M,
} from "../src/viewmodel";
import { stateMsg } from "./fixtures";

describe("connection status", () => {
  it("is disconnected before any message", () => {
    const vm = createViewModel();
    vm.socketOpen = true;
    expect(connectionStatus(vm, 0)).toBe("disconnected");
  });

  it("tracks staleness of the last state message", () => {
    const vm = createViewModel();
    vm.socketOpen = true;
    applyState(vm, stateMsg(), 1000);
    expect(connectionStatus(vm, 1000 + STALE_MS)).toBe("connected");
    expect(connectionStatus(vm, 1001 + STALE_MS)).toBe("disconnected");
  });

  it("is disconnected when the socket is down regardless of recency", () => {
    const vm = createViewModel();
    vm.socketOpen = true;
    applyState(vm, stateMsg(), 1000);
    vm.socketOpen = false;
    expect(connectionStatus(vm, 1000)).toBe("disconnected");
  });
});

describe("latest-state buffer", () => {
  it("keeps only the most recent message", () => {
    const vm = createViewModel();
    applyState(vm, stateMsg({ t: 1.0 }), 0);
    applyState(vm, stateMsg({ t: 2.0, robot: [2.5, 2.0, 0.1] }), 100);
    expect(vm.state!.t).toBe(2.0);
    expect(vm.state!.robot[0]).toBe(2.5);
    expect(vm.lastStateAtMs).toBe(100);
  });
});

describe("session button gating", () => {
  it("disables everything without a state message", () => {
    const vm = createViewModel();
    expect(startEnabled(vm)).toBe(false);
    expect(saveEnabled(vm)).toBe(false);
    expect(discardEnabled(vm)).toBe(false);
  });

  it("disables save until the server reports 2 waypoints", () => {
    const vm = createViewModel();
    applyState(vm, stateMsg(), 0); // not recording: save stays off
    expect(startEnabled(vm)).toBe(true);
    expect(saveEnabled(vm)).toBe(false);
    applyState(vm, stateMsg({ session: { recording: true, waypoints: 1 } }), 0);
    expect(saveEnabled(vm)).toBe(false);
    expect(discardEnabled(vm)).toBe(true);
    expect(startEnabled(vm)).toBe(false);
    applyState(vm, stateMsg({ session: { recording: true, waypoints: 2 } }), 0);
    expect(saveEnabled(vm)).toBe(true);
  });
});

describe("recording trail", () => {
  it("accumulates robot positions only while recording, then clears", () => {
    const vm = createViewModel();
    applyState(vm, stateMsg({ robot: [1.0, 2.0, 0.0] }), 0);
    expect(vm.trail).toEqual([]);

    const rec = (x: number) =>
      stateMsg({ robot: [x, 2.0, 0.0], session: { recording: true, waypoints: 0 } });
    applyState(vm, rec(1.0), 0);
    applyState(vm, rec(1.0 + TRAIL_MIN_STEP_M / 2), 0); // too close: merged
    applyState(vm, rec(1.2), 0);
    expect(vm.trail).toEqual([
      [1.0, 2.0],
      [1.2, 2.0],
    ]);

    applyState(vm, stateMsg({ robot: [1.3, 2.0, 0.0] }), 0); // recording ended
    expect(vm.trail).toEqual([]);
  });
});
