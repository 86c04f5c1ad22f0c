// Probe input model: cursor motion becomes scan speed (mm/s) through a
// configurable px-to-mm scale and an exponential smoother (tau = 50 ms by
// default); force comes from a slider or press control, clamped to 0..5 N.

export type ProbeSettings = {
  pxPerMm: number;
  tauMs: number;
  maxForceN: number;
  maxSpeedMms: number;
  // cursor counts as stationary when no event arrived for this long
  staleMs: number;
};

export const DEFAULT_SETTINGS: ProbeSettings = {
  pxPerMm: 1,
  tauMs: 50,
  maxForceN: 5,
  maxSpeedMms: 400,
  staleMs: 60,
};

export type ProbeSample = { force: number; speed: number };

export type ProbeInput = {
  move(x: number, y: number, tMs: number): void;
  setForce(newtons: number): void;
  release(): void;
  sample(tMs: number): ProbeSample;
  readonly settings: ProbeSettings;
};

export function createProbeInput(overrides: Partial<ProbeSettings> = {}): ProbeInput {
  const settings: ProbeSettings = { ...DEFAULT_SETTINGS, ...overrides };
  let lastX = NaN;
  let lastY = NaN;
  let lastMoveT = -Infinity;
  let rawSpeed = 0;
  let smoothSpeed = 0;
  let lastSampleT = NaN;
  let force = 0;

  return {
    settings,

    move(x, y, tMs) {
      if (isNaN(lastX)) {
        lastX = x;
        lastY = y;
        lastMoveT = tMs;
        return;
      }
      const dt = tMs - lastMoveT;
      if (dt <= 0) return;
      const distMm = Math.hypot(x - lastX, y - lastY) / settings.pxPerMm;
      rawSpeed = Math.min((distMm / dt) * 1000, settings.maxSpeedMms);
      lastX = x;
      lastY = y;
      lastMoveT = tMs;
    },

    setForce(newtons) {
      force = Math.min(Math.max(newtons, 0), settings.maxForceN);
    },

    release() {
      force = 0;
    },

    sample(tMs) {
      const stale = tMs - lastMoveT > settings.staleMs;
      const target = stale ? 0 : rawSpeed;
      if (isNaN(lastSampleT)) {
        smoothSpeed = target;
      } else {
        const dt = Math.max(tMs - lastSampleT, 0);
        const alpha = 1 - Math.exp(-dt / settings.tauMs);
        smoothSpeed += (target - smoothSpeed) * alpha;
      }
      lastSampleT = tMs;
      return { force, speed: Math.max(smoothSpeed, 0) };
    },
  };
}
