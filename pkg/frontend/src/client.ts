// Socket + command loop. Single-threaded event-driven: message handlers
// only update the view model (latest state wins); a 20 Hz timer streams the
// current keyboard command while any key is held and sends one zero command
// on release. The render loop reads the view model independently.

import {
  encodeClientMessage,
  parseServerMessage,
  type SessionMessage,
} from "./protocol";
import { inputToCommand, KEY_BINDINGS } from "./input";
import {
  applyState,
  createViewModel,
  saveEnabled,
  type ViewModel,
} from "./viewmodel";

export const CMD_HZ = 20;
export const RECONNECT_DELAY_MS = 1000;

// The WebSocket surface we use, injectable for tests.
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
}

export interface ClientOptions {
  socketFactory?: (url: string) => SocketLike;
  now?: () => number; // ms
  autoReconnect?: boolean;
}

function defaultFactory(url: string): SocketLike {
  return new WebSocket(url) as unknown as SocketLike;
}

export class TeleopClient {
  readonly vm: ViewModel = createViewModel();

  private sock: SocketLike | null = null;
  private readonly factory: (url: string) => SocketLike;
  private readonly now: () => number;
  private readonly autoReconnect: boolean;
  private cmdTimer: ReturnType<typeof setInterval> | null = null;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private lastSentCmd: { v: number; w: number } | null = null;
  private disposed = false;

  constructor(
    private readonly url: string,
    opts: ClientOptions = {},
  ) {
    this.factory = opts.socketFactory ?? defaultFactory;
    this.now = opts.now ?? (() => Date.now());
    this.autoReconnect = opts.autoReconnect ?? true;
  }

  connect(): void {
    if (this.disposed) return;
    const sock = this.factory(this.url);
    this.sock = sock;
    sock.onopen = () => {
      this.vm.socketOpen = true;
      this.lastSentCmd = null;
    };
    sock.onclose = () => {
      this.vm.socketOpen = false;
      if (this.autoReconnect && !this.disposed) {
        this.reconnectTimer = setTimeout(() => this.connect(), RECONNECT_DELAY_MS);
      }
    };
    sock.onmessage = (ev) => {
      if (typeof ev.data !== "string") return;
      const msg = parseServerMessage(ev.data);
      if (msg === null) return; // malformed or unknown: drop
      if (msg.type === "state") applyState(this.vm, msg, this.now());
      else this.vm.lastAck = msg;
    };
    if (this.cmdTimer === null) {
      this.cmdTimer = setInterval(() => this.tick(), 1000 / CMD_HZ);
    }
  }

  dispose(): void {
    this.disposed = true;
    if (this.cmdTimer !== null) clearInterval(this.cmdTimer);
    if (this.reconnectTimer !== null) clearTimeout(this.reconnectTimer);
    this.sock?.close();
  }

  /** Route a KeyboardEvent.code; returns true when the key steers. */
  keyDown(code: string): boolean {
    const key = KEY_BINDINGS[code];
    if (key === undefined) return false;
    this.vm.pressed.add(key);
    return true;
  }

  keyUp(code: string): boolean {
    const key = KEY_BINDINGS[code];
    if (key === undefined) return false;
    this.vm.pressed.delete(key);
    return true;
  }

  /** All keys up (window blur / focus loss). */
  releaseAll(): void {
    this.vm.pressed.clear();
  }

  startSession(): void {
    this.sendSession("start");
  }

  /** No-op unless the server has reported >= 2 waypoints. */
  saveSession(): void {
    if (saveEnabled(this.vm)) this.sendSession("save");
  }

  discardSession(): void {
    this.sendSession("discard");
  }

  private tick(): void {
    if (!this.vm.socketOpen) return;
    if (this.vm.pressed.size > 0) {
      this.sendCmd(inputToCommand(this.vm.pressed));
    } else if (this.lastSentCmd !== null && (this.lastSentCmd.v !== 0 || this.lastSentCmd.w !== 0)) {
      this.sendCmd({ v: 0, w: 0 });
    }
  }

  private sendCmd(cmd: { v: number; w: number }): void {
    this.send(encodeClientMessage({ type: "cmd", ...cmd }));
    this.lastSentCmd = cmd;
  }

  private sendSession(action: SessionMessage["action"]): void {
    if (!this.vm.socketOpen) return;
    this.send(encodeClientMessage({ type: "session", action }));
  }

  private send(frame: string): void {
    try {
      this.sock?.send(frame);
    } catch {
      // Socket died between the open flag and the send; onclose handles it.
    }
  }
}
