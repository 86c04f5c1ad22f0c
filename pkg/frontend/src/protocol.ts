// Wire protocol shared with the synthesis service. JSON text messages plus
// binary audio blocks: 8-byte little-endian uint64 tick, then 100 float32
// little-endian samples (10 ms at 10 kHz).

export const N_BINS = 101;
export const TICK_MS = 10;
export const BLOCK_SAMPLES = 100;
export const SAMPLE_RATE_HZ = 10000;

export type SpectrumMsg = { t: "spectrum"; tick: number; bins: number[] };
export type MaterialsMsg = { t: "materials"; materials: string[]; active: string };
export type ErrorMsg = { t: "error"; message: string };
export type ServerMsg = SpectrumMsg | MaterialsMsg | ErrorMsg;

export type AudioBlock = { tick: number; samples: Float32Array };

export function parseServerMessage(text: string): ServerMsg | null {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    console.warn("probe-ui: unparseable server message", text.slice(0, 80));
    return null;
  }
  const msg = raw as Record<string, unknown>;
  if (msg === null || typeof msg !== "object") return warnShape(text);
  if (msg.t === "spectrum") {
    if (
      typeof msg.tick === "number" &&
      Array.isArray(msg.bins) &&
      msg.bins.length === N_BINS &&
      msg.bins.every((v) => typeof v === "number" && isFinite(v))
    ) {
      return { t: "spectrum", tick: msg.tick, bins: msg.bins as number[] };
    }
    return warnShape(text);
  }
  if (msg.t === "materials") {
    if (
      Array.isArray(msg.materials) &&
      msg.materials.every((m) => typeof m === "string")
    ) {
      return {
        t: "materials",
        materials: msg.materials as string[],
        active: typeof msg.active === "string" ? msg.active : "",
      };
    }
    return warnShape(text);
  }
  if (msg.t === "error") {
    return { t: "error", message: String(msg.message ?? "") };
  }
  return warnShape(text);
}

function warnShape(text: string): null {
  console.warn("probe-ui: ignoring malformed server message", text.slice(0, 80));
  return null;
}

export function decodeAudioBlock(buf: ArrayBuffer): AudioBlock | null {
  if (buf.byteLength !== 8 + 4 * BLOCK_SAMPLES) {
    console.warn("probe-ui: bad audio block length", buf.byteLength);
    return null;
  }
  const view = new DataView(buf);
  const tick = Number(view.getBigUint64(0, true));
  const samples = new Float32Array(BLOCK_SAMPLES);
  for (let i = 0; i < BLOCK_SAMPLES; i++) {
    samples[i] = view.getFloat32(8 + 4 * i, true);
  }
  return { tick, samples };
}

export function encodeAudioBlock(tick: number, samples: Float32Array): ArrayBuffer {
  const buf = new ArrayBuffer(8 + 4 * samples.length);
  const view = new DataView(buf);
  view.setBigUint64(0, BigInt(tick), true);
  for (let i = 0; i < samples.length; i++) {
    view.setFloat32(8 + 4 * i, samples[i], true);
  }
  return buf;
}

export function actionMessage(force: number, speed: number, ts: number): string {
  return JSON.stringify({ t: "action", force, speed, ts });
}

export function selectMessage(material: string): string {
  return JSON.stringify({ t: "select", material });
}
