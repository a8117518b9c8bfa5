import { describe, expect, it } from "vitest";

import { RequestSequencer } from "../src/sequencer.js";

describe("RequestSequencer", () => {
  it("only the newest request id is current", () => {
    const seq = new RequestSequencer();
    const first = seq.begin();
    const second = seq.begin();
    expect(seq.isCurrent(first.id)).toBe(false);
    expect(seq.isCurrent(second.id)).toBe(true);
  });

  it("ids increase monotonically", () => {
    const seq = new RequestSequencer();
    const ids = [seq.begin().id, seq.begin().id, seq.begin().id];
    expect(ids[1]).toBeGreaterThan(ids[0]);
    expect(ids[2]).toBeGreaterThan(ids[1]);
  });

  it("starting a new request aborts the previous one", () => {
    const seq = new RequestSequencer();
    const first = seq.begin();
    expect(first.signal.aborted).toBe(false);
    const second = seq.begin();
    expect(first.signal.aborted).toBe(true);
    expect(second.signal.aborted).toBe(false);
  });

  it("a stale response is rejected even if it settles after the newest", () => {
    const seq = new RequestSequencer();
    const slow = seq.begin();
    const fast = seq.begin();
    // the fast (newest) response lands first and is rendered ...
    expect(seq.isCurrent(fast.id)).toBe(true);
    // ... then the slow response finally settles and must be dropped
    expect(seq.isCurrent(slow.id)).toBe(false);
  });

  it("invalidate drops everything in flight", () => {
    const seq = new RequestSequencer();
    const req = seq.begin();
    seq.invalidate();
    expect(req.signal.aborted).toBe(true);
    expect(seq.isCurrent(req.id)).toBe(false);
  });

  it("works again after invalidate", () => {
    const seq = new RequestSequencer();
    seq.begin();
    seq.invalidate();
    const next = seq.begin();
    expect(seq.isCurrent(next.id)).toBe(true);
    expect(next.signal.aborted).toBe(false);
  });
});
