// Fixed-cadence action pump. Scheduling is drift-corrected against the
// clock (next deadline = start + n * period), so the long-run rate stays at
// 100 Hz no matter how late individual timer callbacks fire; it never
// depends on the render loop.

import { ProbeInput } from "./input.js";

export type Clock = {
  now(): number;
  setTimeout(fn: () => void, ms: number): ReturnType<typeof setTimeout>;
  clearTimeout(id: ReturnType<typeof setTimeout>): void;
};

export const systemClock: Clock = {
  now: () => Date.now(),
  setTimeout: (fn, ms) => setTimeout(fn, ms),
  clearTimeout: (id) => clearTimeout(id),
};

export type Pump = { stop(): void; sent(): number };

export function startPump(
  send: (force: number, speed: number, ts: number) => void,
  input: ProbeInput,
  clock: Clock = systemClock,
  hz = 100,
): Pump {
  const period = 1000 / hz;
  const start = clock.now();
  let n = 0;
  let timer: ReturnType<typeof setTimeout> | null = null;
  let stopped = false;

  function fire() {
    if (stopped) return;
    const now = clock.now();
    // catch up on every deadline that has already passed
    while (start + n * period <= now) {
      const ts = start + n * period;
      const s = input.sample(ts);
      send(s.force, s.speed, Math.round(ts));
      n += 1;
    }
    timer = clock.setTimeout(fire, Math.max(start + n * period - clock.now(), 0));
  }

  timer = clock.setTimeout(fire, period);
  return {
    stop() {
      stopped = true;
      if (timer !== null) clock.clearTimeout(timer);
    },
    sent: () => n,
  };
}
