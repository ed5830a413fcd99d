import { describe, expect, it } from "vitest";

import {
  clientMessageSchema,
  encodeClientMessage,
  parseServerMessage,
} from "../src/protocol";
import { stateMsg } from "./fixtures";

describe("server message parsing", () => {
  it("accepts a bridge-shaped state message", () => {
    const msg = parseServerMessage(JSON.stringify(stateMsg()));
    expect(msg).not.toBeNull();
    expect(msg!.type).toBe("state");
    if (msg!.type === "state") {
      expect(msg!.robot).toEqual([1.0, 2.0, 0.0]);
      expect(msg!.session.waypoints).toBe(0);
    }
  });

  it("accepts goal/path when populated", () => {
    const raw = JSON.stringify(
      stateMsg({ goal: [3.0, 1.0], path: [[1.0, 2.0], [3.0, 1.0]] }),
    );
    const msg = parseServerMessage(raw);
    expect(msg).not.toBeNull();
    if (msg!.type === "state") {
      expect(msg!.goal).toEqual([3.0, 1.0]);
      expect(msg!.path!.length).toBe(2);
    }
  });

  it("accepts acks", () => {
    const msg = parseServerMessage('{"type":"ack","action":"save","ok":true,"records":1}');
    expect(msg).toEqual({ type: "ack", action: "save", ok: true, records: 1 });
  });

  it.each<[string, string]>([
    ["not json", "garbage"],
    ['{"type":"state"}', "missing fields"],
    [JSON.stringify({ ...stateMsg(), robot: [1.0, 2.0] }), "robot missing theta"],
    [JSON.stringify({ ...stateMsg(), session: { recording: "yes", waypoints: 0 } }), "bad session"],
    [JSON.stringify({ ...stateMsg(), workspace: [5.0] }), "bad workspace"],
    ['{"type":"telemetry"}', "unknown type"],
    ["[1,2,3]", "non-object"],
  ])("rejects %s (%s)", (raw) => {
    expect(parseServerMessage(raw)).toBeNull();
  });
});

describe("client message encoding", () => {
  it("round-trips a command through the schema", () => {
    const raw = encodeClientMessage({ type: "cmd", v: 0.3, w: -1.0 });
    expect(clientMessageSchema.safeParse(JSON.parse(raw)).success).toBe(true);
    expect(JSON.parse(raw)).toEqual({ type: "cmd", v: 0.3, w: -1.0 });
  });

  it("round-trips session actions", () => {
    for (const action of ["start", "save", "discard"] as const) {
      const raw = encodeClientMessage({ type: "session", action });
      expect(clientMessageSchema.safeParse(JSON.parse(raw)).success).toBe(true);
    }
  });

  it("throws on schema violations instead of sending them", () => {
    expect(() =>
      encodeClientMessage({ type: "session", action: "pause" } as never),
    ).toThrow();
    expect(() =>
      encodeClientMessage({ type: "cmd", v: Number.NaN, w: 0 } as never),
    ).toThrow();
  });
});
