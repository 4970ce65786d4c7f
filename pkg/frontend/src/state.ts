// Console state reducer. Pure: every event produces the next state, and
// everything rendered derives from the last received snapshot/deltas.

import type { ScanStatus, StateSnapshot, WsMessage } from "./types.js";
import { PointBuffer } from "./points.js";

export type Connection = "connecting" | "connected" | "disconnected";

export interface ConsoleState {
  connection: Connection;
  snapshot: StateSnapshot | null;
  points: PointBuffer;
  scan: ScanStatus;
  pending: boolean; // a command POST is in flight
  banner: string | null;
}

export function initialState(): ConsoleState {
  return {
    connection: "connecting",
    snapshot: null,
    points: new PointBuffer(),
    scan: { state: "idle" },
    pending: false,
    banner: null,
  };
}

export type ConsoleEvent =
  | { kind: "ws_open" }
  | { kind: "ws_close" }
  | { kind: "ws_message"; message: WsMessage }
  | { kind: "command_sent" }
  | { kind: "command_ok" }
  | { kind: "command_error"; banner: string }
  | { kind: "banner_dismissed" };

export function reduce(state: ConsoleState, ev: ConsoleEvent): ConsoleState {
  switch (ev.kind) {
    case "ws_open":
      return { ...state, connection: "connected" };
    case "ws_close":
      // keep the last snapshot visible, but flag it and disable controls
      return { ...state, connection: "disconnected" };
    case "ws_message":
      return applyMessage(state, ev.message);
    case "command_sent":
      return { ...state, pending: true, banner: null };
    case "command_ok":
      return { ...state, pending: false };
    case "command_error":
      return { ...state, pending: false, banner: ev.banner };
    case "banner_dismissed":
      return { ...state, banner: null };
  }
}

function applyMessage(state: ConsoleState, msg: WsMessage): ConsoleState {
  if (msg.type === "scan_point") {
    state.points.push(msg);
    return { ...state };
  }
  if (msg.type === "scan_status") {
    const { type: _type, ...status } = msg;
    if (status.state === "running" && state.scan.state !== "running") {
      state.points.reset();
    }
    return { ...state, scan: status };
  }
  // full snapshot (both the handshake message and throttled updates)
  const snapshot = msg as StateSnapshot;
  if (snapshot.scan.state === "running" && state.scan.state === "idle") {
    state.points.reset();
  }
  return { ...state, snapshot, scan: snapshot.scan };
}

/** Which controls are usable given the rendered state. The server is the
 * final arbiter; this only blocks actions it would certainly reject. */
export function controlsEnabled(state: ConsoleState): {
  energy: boolean;
  move: boolean;
  scanStart: boolean;
  scanAbort: boolean;
} {
  const up = state.connection === "connected" && !state.pending;
  const scanning = state.scan.state === "running";
  return {
    energy: up && !scanning,
    move: up,
    scanStart: up && !scanning,
    scanAbort: up && scanning,
  };
}
