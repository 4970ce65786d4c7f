// Scan point buffer: every scan_point message appears exactly once,
// regardless of WS reconnects or overlapping REST backfills.

import type { ScanPointMsg } from "./types.js";

export interface ScanPoint {
  index: number;
  e_set_ev: number;
  e_readback_ev: number;
  mirror_steps: number;
  grating_steps: number;
  counts: number;
  calc_ms: number;
  t_s: number;
}

export class PointBuffer {
  private byIndex = new Map<number, ScanPoint>();

  push(p: ScanPointMsg | ScanPoint): boolean {
    if (this.byIndex.has(p.index)) {
      return false; // duplicate delivery (e.g. reconnect replay)
    }
    const { index, e_set_ev, e_readback_ev, mirror_steps, grating_steps,
            counts, calc_ms, t_s } = p;
    this.byIndex.set(index, { index, e_set_ev, e_readback_ev, mirror_steps,
                              grating_steps, counts, calc_ms, t_s });
    return true;
  }

  /** Merge a /api/scan/points backfill; returns how many were new. */
  merge(points: ScanPoint[]): number {
    let added = 0;
    for (const p of points) {
      if (this.push(p)) added += 1;
    }
    return added;
  }

  reset(): void {
    this.byIndex.clear();
  }

  get size(): number {
    return this.byIndex.size;
  }

  /** Points in index order (messages may arrive out of order on merge). */
  ordered(): ScanPoint[] {
    return [...this.byIndex.values()].sort((a, b) => a.index - b.index);
  }
}
