// Cross-language check: real messages captured from the Python bridge must
// parse under the client schema. Regenerate with:
//   python3 - <<'EOF' > tests/bridge_messages.jsonl
//   import json
//   from herdpush import bridge, world
//   cfg = world.WorldConfig(5.0, 4.0, 2, receptacle=(0.0, 0.0, 1.5, 1.5),
//                           t_max_steps=10**6)
//   s = bridge.TeleopSession(cfg, seed=3)
//   print(json.dumps(s.state_message()))
//   print(json.dumps({"type": "ack", **s.session_action("start")}))
//   s.submit_cmd(0.3, 0.0)
//   for _ in range(30): s.tick()
//   print(json.dumps(s.state_message()))
//   EOF

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { parseServerMessage } from "../src/protocol";

const here = dirname(fileURLToPath(import.meta.url));

describe("captured bridge traffic", () => {
  const lines = readFileSync(join(here, "bridge_messages.jsonl"), "utf-8")
    .trim()
    .split("\n");

  it("has the expected capture", () => {
    expect(lines.length).toBe(3);
  });

  it.each(lines.map((l, i) => [i, l] as const))("message %i parses", (_i, raw) => {
    const msg = parseServerMessage(raw);
    expect(msg).not.toBeNull();
  });

  it("round-trips the recording session fields", () => {
    const last = parseServerMessage(lines[lines.length - 1]);
    expect(last).not.toBeNull();
    if (last!.type === "state") {
      expect(last!.session.recording).toBe(true);
      expect(last!.session.waypoints).toBeGreaterThanOrEqual(1);
      expect(last!.workspace).toEqual([5.0, 4.0]);
    }
  });
});
