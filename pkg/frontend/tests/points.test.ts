import { describe, expect, it } from "vitest";

import { PointBuffer, ScanPoint } from "../src/points.js";

function point(index: number, counts = 100): ScanPoint {
  return {
    index,
    e_set_ev: 390 + index * 0.5,
    e_readback_ev: 390 + index * 0.5 + 0.001,
    mirror_steps: 14000 + index,
    grating_steps: 20000 + index,
    counts,
    calc_ms: 0.05,
    t_s: index * 0.7,
  };
}

describe("PointBuffer", () => {
  it("keeps each index exactly once", () => {
    const buf = new PointBuffer();
    expect(buf.push(point(0))).toBe(true);
    expect(buf.push(point(1))).toBe(true);
    expect(buf.push(point(0, 999))).toBe(false); // reconnect replay
    expect(buf.size).toBe(2);
    expect(buf.ordered()[0].counts).toBe(100); // first delivery wins
  });

  it("merges a REST backfill without duplicating WS deliveries", () => {
    const buf = new PointBuffer();
    buf.push(point(3));
    buf.push(point(4));
    const added = buf.merge([0, 1, 2, 3, 4].map((i) => point(i)));
    expect(added).toBe(3);
    expect(buf.size).toBe(5);
  });

  it("orders by index even when arrival is shuffled", () => {
    const buf = new PointBuffer();
    for (const i of [4, 0, 2, 1, 3]) buf.push(point(i));
    expect(buf.ordered().map((p) => p.index)).toEqual([0, 1, 2, 3, 4]);
  });

  it("reset empties the buffer for the next scan", () => {
    const buf = new PointBuffer();
    buf.push(point(0));
    buf.reset();
    expect(buf.size).toBe(0);
    expect(buf.push(point(0))).toBe(true);
  });

  it("holds all 41 points of a 41-point scan", () => {
    const buf = new PointBuffer();
    for (let i = 0; i < 41; i++) buf.push(point(i));
    for (let i = 0; i < 41; i++) buf.push(point(i)); // full replay
    expect(buf.size).toBe(41);
    expect(buf.ordered()).toHaveLength(41);
  });
});
