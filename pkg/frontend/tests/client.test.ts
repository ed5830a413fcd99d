import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { CMD_HZ, RECONNECT_DELAY_MS, TeleopClient } from "../src/client";
import { clientMessageSchema } from "../src/protocol";
import { FakeSocket, stateMsg } from "./fixtures";

let sockets: FakeSocket[];

function makeClient(): { client: TeleopClient; sock: () => FakeSocket } {
  sockets = [];
  const client = new TeleopClient("ws://test", {
    socketFactory: () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
    now: () => Date.now(),
  });
  client.connect();
  return { client, sock: () => sockets[sockets.length - 1] };
}

beforeEach(() => {
  vi.useFakeTimers();
});

afterEach(() => {
  vi.useRealTimers();
});

describe("command streaming", () => {
  it("sends at 20 Hz while a key is held and one zero on release", () => {
    const { client, sock } = makeClient();
    sock().open();

    client.keyDown("KeyW");
    vi.advanceTimersByTime(1000);
    const held = sock().sent.map((s) => JSON.parse(s));
    expect(held.length).toBe(CMD_HZ);
    expect(held.every((m) => m.type === "cmd" && m.v === 0.3 && m.w === 0)).toBe(true);

    client.keyUp("KeyW");
    vi.advanceTimersByTime(1000);
    const after = sock().sent.map((s) => JSON.parse(s)).slice(held.length);
    expect(after).toEqual([{ type: "cmd", v: 0, w: 0 }]); // exactly one zero

    vi.advanceTimersByTime(1000); // idle: nothing more
    expect(sock().sent.length).toBe(held.length + 1);
    client.dispose();
  });

  it("streams the live mapping as keys change", () => {
    const { client, sock } = makeClient();
    sock().open();
    client.keyDown("KeyW");
    client.keyDown("ArrowLeft");
    vi.advanceTimersByTime(100);
    client.keyDown("KeyS"); // forward+back cancel; left turn remains
    vi.advanceTimersByTime(100);
    const sent = sock().sent.map((s) => JSON.parse(s));
    expect(sent[0]).toEqual({ type: "cmd", v: 0.3, w: 1.0 });
    expect(sent[sent.length - 1]).toEqual({ type: "cmd", v: 0, w: 1.0 });
    client.dispose();
  });

  it("does not send while the socket is closed", () => {
    const { client, sock } = makeClient();
    client.keyDown("KeyW");
    vi.advanceTimersByTime(500);
    expect(sock().sent.length).toBe(0);
    client.dispose();
  });

  it("ignores unbound keys", () => {
    const { client, sock } = makeClient();
    sock().open();
    expect(client.keyDown("KeyQ")).toBe(false);
    vi.advanceTimersByTime(500);
    expect(sock().sent.length).toBe(0);
    client.dispose();
  });
});

describe("session controls", () => {
  it("gates save on the server-reported waypoint count", () => {
    const { client, sock } = makeClient();
    sock().open();
    client.saveSession(); // no state yet: refused locally
    sock().pushState(stateMsg({ session: { recording: true, waypoints: 1 } }));
    client.saveSession(); // 1 waypoint: still refused
    expect(sock().sent.length).toBe(0);

    sock().pushState(stateMsg({ session: { recording: true, waypoints: 2 } }));
    client.saveSession();
    expect(sock().sent.map((s) => JSON.parse(s))).toEqual([
      { type: "session", action: "save" },
    ]);
    client.dispose();
  });

  it("start and discard pass through; acks land in the view model", () => {
    const { client, sock } = makeClient();
    sock().open();
    client.startSession();
    client.discardSession();
    expect(sock().sent.map((s) => JSON.parse(s))).toEqual([
      { type: "session", action: "start" },
      { type: "session", action: "discard" },
    ]);
    sock().pushFrame('{"type":"ack","action":"start","ok":true,"records":0}');
    expect(client.vm.lastAck).toEqual({ type: "ack", action: "start", ok: true, records: 0 });
    client.dispose();
  });
});

describe("protocol conformance", () => {
  it("every emitted message validates against the wire schema", () => {
    // A full scripted session: drive, turn, start, drive, save, discard.
    const { client, sock } = makeClient();
    sock().open();
    sock().pushState(stateMsg());
    client.keyDown("KeyW");
    vi.advanceTimersByTime(300);
    client.keyDown("ArrowRight");
    vi.advanceTimersByTime(300);
    client.keyUp("KeyW");
    client.keyUp("ArrowRight");
    vi.advanceTimersByTime(100);
    client.startSession();
    sock().pushState(stateMsg({ session: { recording: true, waypoints: 3 } }));
    client.keyDown("ArrowUp");
    vi.advanceTimersByTime(500);
    client.keyUp("ArrowUp");
    vi.advanceTimersByTime(100);
    client.saveSession();
    client.discardSession();

    expect(sock().sent.length).toBeGreaterThan(20);
    for (const raw of sock().sent) {
      expect(clientMessageSchema.safeParse(JSON.parse(raw)).success).toBe(true);
    }
    client.dispose();
  });
});

describe("server state handling", () => {
  it("renders only server state: no extrapolation while messages stop", () => {
    const { client, sock } = makeClient();
    sock().open();
    sock().pushState(stateMsg({ robot: [1.0, 2.0, 0.0] }));
    client.keyDown("KeyW"); // commands keep flowing...
    vi.advanceTimersByTime(5000); // ...but no state arrives
    expect(client.vm.state!.robot).toEqual([1.0, 2.0, 0.0]); // untouched
    client.dispose();
  });

  it("drops malformed frames without throwing", () => {
    const { client, sock } = makeClient();
    sock().open();
    sock().pushFrame("not json");
    sock().pushFrame('{"type":"state"}');
    sock().pushFrame(12345);
    expect(client.vm.state).toBeNull();
    sock().pushState(stateMsg());
    expect(client.vm.state).not.toBeNull();
    client.dispose();
  });

  it("reconnects after the server drops the socket", () => {
    const { client } = makeClient();
    sockets[0].open();
    expect(client.vm.socketOpen).toBe(true);
    sockets[0].dropFromServer();
    expect(client.vm.socketOpen).toBe(false);
    vi.advanceTimersByTime(RECONNECT_DELAY_MS + 1);
    expect(sockets.length).toBe(2);
    sockets[1].open();
    expect(client.vm.socketOpen).toBe(true);
    client.dispose();
  });
});
