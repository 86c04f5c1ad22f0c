// Last-second waveform strip: a sample ring plus a min/max-per-column
// rasterizer, pure for the same determinism reasons as the spectrogram.

import { SAMPLE_RATE_HZ } from "./protocol.js";

export type Waveform = {
  push(samples: Float32Array): void;
  render(width: number, height: number): Uint8ClampedArray;
  count(): number;
};

export function createWaveform(seconds = 1): Waveform {
  const capacity = Math.round(seconds * SAMPLE_RATE_HZ);
  const ring = new Float32Array(capacity);
  let head = 0;
  let filled = 0;

  return {
    push(samples) {
      for (let i = 0; i < samples.length; i++) {
        ring[head] = samples[i];
        head = (head + 1) % capacity;
      }
      filled = Math.min(filled + samples.length, capacity);
    },

    render(width, height) {
      const out = new Uint8ClampedArray(width * height * 4);
      for (let i = 3; i < out.length; i += 4) out[i] = 255;
      if (filled === 0) return out;
      const start = (head - filled + capacity * 2) % capacity;
      const perCol = filled / width;
      // full scale at +-1; typical synthetic accel is far smaller, so a
      // fixed display gain keeps quiet textures visible
      const gain = 20;
      for (let c = 0; c < width; c++) {
        let lo = Infinity;
        let hi = -Infinity;
        const a = Math.floor(c * perCol);
        const b = Math.max(Math.floor((c + 1) * perCol), a + 1);
        for (let j = a; j < b && j < filled; j++) {
          const v = ring[(start + j) % capacity] * gain;
          if (v < lo) lo = v;
          if (v > hi) hi = v;
        }
        if (lo > hi) continue;
        const mid = height / 2;
        let rTop = Math.round(mid - Math.min(Math.max(hi, -1), 1) * mid);
        let rBot = Math.round(mid - Math.min(Math.max(lo, -1), 1) * mid);
        rTop = Math.min(Math.max(rTop, 0), height - 1);
        rBot = Math.min(Math.max(rBot, 0), height - 1);
        for (let r = rTop; r <= rBot; r++) {
          const px = (r * width + c) * 4;
          out[px] = 120;
          out[px + 1] = 220;
          out[px + 2] = 160;
        }
      }
      return out;
    },

    count: () => filled,
  };
}
