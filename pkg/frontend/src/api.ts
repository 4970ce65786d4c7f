// Thin REST client for the gateway. Every mutation goes through here;
// reads come in over the WebSocket.

import { bannerText } from "./errors.js";
import type { ScanPoint } from "./points.js";
import type { ScanStatus } from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, readonly banner: string) {
    super(banner);
  }
}

async function request<T>(method: string, path: string,
                          body?: unknown): Promise<T> {
  let resp: Response;
  try {
    resp = await fetch(path, {
      method,
      headers: body === undefined ? undefined
        : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
  } catch {
    throw new ApiError(0, "disconnected: gateway unreachable");
  }
  const payload = await resp.json().catch(() => null);
  if (!resp.ok) {
    throw new ApiError(resp.status, bannerText(resp.status, payload));
  }
  return payload as T;
}

export const api = {
  setEnergy: (e_ev: number, mode: string) =>
    request("POST", "/api/energy", { e_ev, mode }),
  move: (unit: string, steps: number, rel: boolean) =>
    request("POST", `/api/units/${encodeURIComponent(unit)}/move`,
            { steps, rel }),
  stop: (unit: string) =>
    request("POST", `/api/units/${encodeURIComponent(unit)}/stop`),
  clearFault: (unit: string) =>
    request("DELETE", `/api/units/${encodeURIComponent(unit)}/fault`),
  buildFit: (e_lo: number, e_hi: number, n: number) =>
    request("POST", "/api/fit", { e_lo, e_hi, n }),
  startScan: (plan: { e_start: number; e_end: number; step?: number;
                      dwell_s?: number; mode?: string }) =>
    request("POST", "/api/scan", plan),
  abortScan: () => request("DELETE", "/api/scan"),
  scanPoints: (since: number) =>
    request<{ points: ScanPoint[]; status: ScanStatus }>(
      "GET", `/api/scan/points?since=${since}`),
};
