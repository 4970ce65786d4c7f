// Shapes of the gateway's REST results and WebSocket messages.
// These mirror docs/gateway.md in the server repo exactly.

export interface UnitSnapshot {
  name: string;
  kind: "motor" | "encoder" | "detector";
  state?: string;
  fault_code?: string | null;
  position_steps?: number;
  target_steps?: number;
  counts?: number;
  reading?: number;
  [extra: string]: unknown;
}

export interface ScanStatus {
  state: "idle" | "running" | "done" | "aborted" | "failed";
  current?: number;
  total?: number;
  error?: { code: string; message: string };
  [extra: string]: unknown;
}

export interface StateSnapshot {
  type?: "snapshot";
  units: UnitSnapshot[];
  energy_ev: number | null;
  mode: string;
  mono: Record<string, number>;
  fits_built: boolean;
  fits_stale: boolean;
  scan: ScanStatus;
  uptime_s: number;
  sim_time_s: number;
}

export interface ScanPointMsg {
  type: "scan_point";
  index: number;
  e_set_ev: number;
  e_readback_ev: number;
  mirror_steps: number;
  grating_steps: number;
  counts: number;
  calc_ms: number;
  t_s: number;
}

export interface ScanStatusMsg extends ScanStatus {
  type: "scan_status";
}

export type WsMessage = StateSnapshot | ScanPointMsg | ScanStatusMsg;

export interface GatewayError {
  code: string;
  message: string;
}
