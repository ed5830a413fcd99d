// Wire schema for the teleop bridge (JSON over one websocket).
//
//   server -> client  state  {type,t,robot,boxes,receptacle,obstacles,goal,
//                             path,workspace,session}
//                     ack    {type,action,ok,records}   (reply to session msgs)
//   client -> server  cmd     {type,v,w}
//                     session {type,action}
//
// Every outgoing message is checked against these schemas before send,
// and every incoming one before use; anything that fails is dropped.

import { z } from "zod";

const vec2 = z.tuple([z.number(), z.number()]);
const rect = z.tuple([z.number(), z.number(), z.number(), z.number()]); // x0,y0,x1,y1

export const stateMessageSchema = z.object({
  type: z.literal("state"),
  t: z.number(),
  robot: z.tuple([z.number(), z.number(), z.number()]), // x, y, theta
  boxes: z.array(vec2),
  receptacle: rect,
  obstacles: z.array(rect),
  goal: vec2.nullable(),
  path: z.array(vec2).nullable(),
  workspace: z.tuple([z.number(), z.number()]), // width_m, height_m
  session: z.object({
    recording: z.boolean(),
    waypoints: z.number().int().nonnegative(),
  }),
});

export const ackMessageSchema = z.object({
  type: z.literal("ack"),
  action: z.string(),
  ok: z.boolean(),
  records: z.number().int(),
});

export const cmdMessageSchema = z.object({
  type: z.literal("cmd"),
  v: z.number(), // m/s
  w: z.number(), // rad/s
});

export const sessionMessageSchema = z.object({
  type: z.literal("session"),
  action: z.union([z.literal("start"), z.literal("save"), z.literal("discard")]),
});

export const serverMessageSchema = z.union([stateMessageSchema, ackMessageSchema]);
export const clientMessageSchema = z.union([cmdMessageSchema, sessionMessageSchema]);

export type StateMessage = z.infer<typeof stateMessageSchema>;
export type AckMessage = z.infer<typeof ackMessageSchema>;
export type CmdMessage = z.infer<typeof cmdMessageSchema>;
export type SessionMessage = z.infer<typeof sessionMessageSchema>;
export type ServerMessage = z.infer<typeof serverMessageSchema>;
export type ClientMessage = z.infer<typeof clientMessageSchema>;

/** Parse + validate one incoming frame; null for anything malformed. */
export function parseServerMessage(raw: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  const res = serverMessageSchema.safeParse(data);
  return res.success ? res.data : null;
}

/** Serialize one outgoing message, enforcing the schema (throws on violation). */
export function encodeClientMessage(msg: ClientMessage): string {
  return JSON.stringify(clientMessageSchema.parse(msg));
}
