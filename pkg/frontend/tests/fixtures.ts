// Shared test doubles: a bridge-shaped state message and a scripted socket.

import type { StateMessage } from "../src/protocol";
import type { SocketLike } from "../src/client";

export function stateMsg(overrides: Partial<StateMessage> = {}): StateMessage {
  return {
    type: "state",
    t: 1.5,
    robot: [1.0, 2.0, 0.0],
    boxes: [[4.0, 3.5]],
    receptacle: [0.0, 0.0, 1.5, 1.5],
    obstacles: [],
    goal: null,
    path: null,
    workspace: [5.0, 4.0],
    session: { recording: false, waypoints: 0 },
    ...overrides,
  };
}

export class FakeSocket implements SocketLike {
  sent: string[] = [];
  closed = false;
  onopen: (() => void) | null = null;
  onclose: (() => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  // Test-side controls.
  open(): void {
    this.onopen?.();
  }

  pushFrame(data: unknown): void {
    this.onmessage?.({ data });
  }

  pushState(msg: StateMessage): void {
    this.pushFrame(JSON.stringify(msg));
  }

  dropFromServer(): void {
    this.onclose?.();
  }
}
