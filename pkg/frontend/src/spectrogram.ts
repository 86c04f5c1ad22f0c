// Rolling spectrogram model and rasterizer. Pure data + arithmetic so the
// pixel output is bit-deterministic for a given message sequence; main.ts
// only blits the returned RGBA buffer onto a canvas.

import { N_BINS, TICK_MS } from "./protocol.js";

// 5 s of columns at one column per 10 ms tick
export const DEFAULT_COLS = 500;
// magnitude mapped to full brightness at this value
export const FULL_SCALE = 50;

export type Spectrogram = {
  push(bins: ArrayLike<number>, tick: number): boolean;
  render(): Uint8ClampedArray;
  columns(): number;
  lastTick(): number;
  dropped(): number;
  readonly cols: number;
  readonly bins: number;
};

export function createSpectrogram(cols = DEFAULT_COLS, bins = N_BINS): Spectrogram {
  const ring = new Float32Array(cols * bins);
  let head = 0; // next write slot
  let filled = 0;
  let lastTick = -1;
  let dropped = 0;

  return {
    cols,
    bins,

    push(values, tick) {
      if (values.length !== bins) {
        console.warn("probe-ui: spectrum with wrong bin count", values.length);
        return false;
      }
      if (tick <= lastTick) {
        console.warn("probe-ui: out-of-order spectrum tick", tick, lastTick);
        return false;
      }
      if (lastTick >= 0 && tick > lastTick + 1) {
        dropped += tick - lastTick - 1;
      }
      lastTick = tick;
      const base = head * bins;
      for (let k = 0; k < bins; k++) {
        ring[base + k] = Math.max(Number(values[k]), 0);
      }
      head = (head + 1) % cols;
      if (filled < cols) filled += 1;
      return true;
    },

    // RGBA, width = cols, height = bins; newest column at the right edge,
    // bin 0 on the bottom row. Intensity ramp is fixed so identical input
    // gives identical bytes.
    render() {
      const out = new Uint8ClampedArray(cols * bins * 4);
      for (let c = 0; c < cols; c++) {
        const age = cols - 1 - c; // columns from the right edge
        if (age >= filled) {
          for (let r = 0; r < bins; r++) {
            out[(r * cols + c) * 4 + 3] = 255;
          }
          continue;
        }
        const slot = (head - 1 - age + cols * 2) % cols;
        const base = slot * bins;
        for (let k = 0; k < bins; k++) {
          const x = Math.min(ring[base + k] / FULL_SCALE, 1);
          const i = Math.round(255 * x);
          const row = bins - 1 - k;
          const px = (row * cols + c) * 4;
          out[px] = i;
          out[px + 1] = Math.round(255 * x * x);
          out[px + 2] = Math.min(i * 2, 255);
          out[px + 3] = 255;
        }
      }
      return out;
    },

    columns: () => filled,
    lastTick: () => lastTick,
    dropped: () => dropped,
  };
}

export function tickAgeMs(lastTick: number, firstTickAtMs: number, nowMs: number): number {
  if (lastTick < 0) return NaN;
  return nowMs - (firstTickAtMs + lastTick * TICK_MS);
}
