// Turn gateway error responses into one-line banner text. No silent
// failures: anything unrecognized still renders with its status code.

import type { GatewayError } from "./types.js";

const HINTS: Record<string, string> = {
  E_BUSY: "another operation is in progress",
  E_FAULT: "unit is faulted — clear the fault first",
  E_STALE_FIT: "fit tables are stale — rebuild the fit",
  E_RANGE: "value out of range",
  E_UNSOLVABLE: "no grating geometry for that energy",
  E_NO_UNIT: "no such unit",
  E_NO_SCAN: "no scan to act on",
  E_CONN: "gateway lost the device server",
};

export function bannerText(status: number, body: unknown): string {
  const err = body as Partial<GatewayError> | null;
  if (err && typeof err.code === "string") {
    const hint = HINTS[err.code];
    const msg = typeof err.message === "string" ? err.message : "";
    return hint ? `${err.code}: ${msg || hint}` : `${err.code}: ${msg}`;
  }
  return `HTTP ${status}: request failed`;
}

export function offlineBanner(): string {
  return "disconnected: gateway unreachable, retrying…";
}
