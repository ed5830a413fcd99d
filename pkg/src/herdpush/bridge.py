"""Websocket teleop bridge.

Runs the simulator tick loop (20 Hz) and a state broadcast (10 Hz) over one
asyncio event loop.  Clients steer with velocity commands — single-producer
mailbox, latest command wins — and manage demo recording through session
messages.  Wire format (JSON):

  server -> client  {type:"state", t, robot:[x,y,theta], boxes:[[x,y],...],
                     receptacle:[...], obstacles:[...], goal, path,
                     workspace:[w_m,h_m], session:{recording:bool, waypoints:n}}
                    {type:"ack", action, ok, records}   (reply to session msgs)
  client -> server  {type:"cmd", v:m_per_s, w:rad_per_s}
                    {type:"session", action:"start"|"save"|"discard"}
"""

from __future__ import annotations

import asyncio
import json
import time
from pathlib import Path

import numpy as np

from . import demos, world

TICK_HZ = 20.0
BROADCAST_HZ = 10.0


class TeleopSession:
    """Simulator plus command mailbox and demo-recording state.

    tick() is the only world mutator; socket handlers just deposit the
    latest command and session actions, which take effect at the next tick.
    """

    def __init__(self, config: world.WorldConfig, seed: int = 0,
                 demo_path=None, tick_hz: float = TICK_HZ):
        self.config = config
        self.state = world.reset(config, seed)
        self.tick_hz = tick_hz
        self.demo_path = Path(demo_path) if demo_path is not None else None
        self.cmd = (0.0, 0.0)
        self._pending_stamps: list[float] = []
        self.apply_latencies: list[float] = []  # seconds, one per received cmd
        self.records_saved = 0
        self.recorder: demos.WaypointRecorder | None = None
        self.ticks = 0
        self.bound_port: int | None = None

    @property
    def sim_time(self) -> float:
        return self.ticks / self.tick_hz

    def submit_cmd(self, v, w, stamp: float | None = None) -> None:
        self.cmd = (float(v), float(w))
        self._pending_stamps.append(time.monotonic() if stamp is None else stamp)

    def tick(self) -> None:
        now = time.monotonic()
        for stamp in self._pending_stamps:
            self.apply_latencies.append(now - stamp)
        self._pending_stamps.clear()
        v, w = self.cmd
        dt = 1.0 / self.tick_hz
        st = self.state
        if w != 0.0:
            st.robot_theta = float((st.robot_theta + w * dt + np.pi) % (2 * np.pi) - np.pi)
        if v != 0.0:
            fwd = np.array([np.cos(st.robot_theta), np.sin(st.robot_theta)])
            out = world.step_motion(st, (st.robot_xy, st.robot_xy + fwd * (v * dt)))
            self.state = out.next_state
            self.state.step_index += 1
        if self.recorder is not None:
            self.recorder.log(self.state)
        self.ticks += 1

    def waypoint_count(self) -> int:
        return 0 if self.recorder is None else len(self.recorder.waypoints)

    def session_action(self, action) -> dict:
        ok = False
        if action == "start":
            self.recorder = demos.WaypointRecorder(self.state)
            ok = True
        elif action == "discard":
            self.recorder = None
            ok = True
        elif action == "save" and self.recorder is not None:
            episode = demos.make_episode(self.recorder, self.state.robot_xy.copy(),
                                         self.config)
            if self.demo_path is not None:
                demos.append_episode(self.demo_path, episode)
            self.records_saved += 1
            self.recorder = None
            ok = True
        return {"action": action, "ok": ok, "records": self.records_saved}

    def state_message(self) -> dict:
        st = self.state
        return {
            "type": "state",
            "t": self.sim_time,
            "robot": [float(st.robot_xy[0]), float(st.robot_xy[1]), float(st.robot_theta)],
            "boxes": [[float(b.position[0]), float(b.position[1])]
                      for b in st.boxes if not b.delivered],
            "receptacle": list(map(float, st.config.receptacle)),
            "obstacles": [list(map(float, o)) for o in st.obstacles],
            "goal": None,
            "path": None,
            # Obstacles are interior rects only; the client needs the outer
            # bounds to draw the workspace at a fixed scale.
            "workspace": [float(st.config.width), float(st.config.height)],
            "session": {"recording": self.recorder is not None,
                        "waypoints": self.waypoint_count()},
        }


def handle_message(session: TeleopSession, raw: str) -> dict | None:
    """Apply one client message; returns the ack payload for session
    messages, None otherwise.  Malformed input is ignored."""
    try:
        msg = json.loads(raw)
    except json.JSONDecodeError:
        return None
    if not isinstance(msg, dict):
        return None
    if msg.get("type") == "cmd":
        try:
            session.submit_cmd(float(msg.get("v", 0.0)), float(msg.get("w", 0.0)))
        except (TypeError, ValueError):
            pass
        return None
    if msg.get("type") == "session":
        return {"type": "ack", **session.session_action(msg.get("action"))}
    return None


async def serve_bridge(session: TeleopSession, port: int, host: str = "127.0.0.1",
                       ready: asyncio.Event | None = None,
                       stop: asyncio.Event | None = None) -> None:
    """Serve until `stop` is set (forever when None).  Pass port=0 to bind an
    ephemeral port; the bound port is published on session.bound_port."""
    import websockets

    clients: set = set()

    async def handler(ws):
        clients.add(ws)
        try:
            async for raw in ws:
                ack = handle_message(session, raw)
                if ack is not None:
                    try:
                        await ws.send(json.dumps(ack))
                    except websockets.exceptions.ConnectionClosed:
                        break  # client left with an ack in flight; action already applied
        finally:
            clients.discard(ws)

    async def tick_loop():
        period = 1.0 / session.tick_hz
        loop = asyncio.get_running_loop()
        next_t = loop.time()
        while True:
            session.tick()
            next_t += period
            await asyncio.sleep(max(0.0, next_t - loop.time()))

    async def broadcast_loop():
        period = 1.0 / BROADCAST_HZ
        loop = asyncio.get_running_loop()
        next_t = loop.time()
        while True:
            if clients:
                payload = json.dumps(session.state_message())
                await asyncio.gather(*(c.send(payload) for c in list(clients)),
                                     return_exceptions=True)
            next_t += period
            await asyncio.sleep(max(0.0, next_t - loop.time()))

    async with websockets.serve(handler, host, port) as server:
        session.bound_port = server.sockets[0].getsockname()[1] if server.sockets else port
        if ready is not None:
            ready.set()
        tasks = [asyncio.create_task(tick_loop()), asyncio.create_task(broadcast_loop())]
        try:
            if stop is not None:
                await stop.wait()
            else:
                await asyncio.Future()
        finally:
            for t in tasks:
                t.cancel()
