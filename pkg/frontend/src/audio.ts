// Gap-free audio playback of 10 ms blocks through WebAudio, guarded so a
// missing or broken audio device degrades to visual-only mode instead of
// crashing the page. Buffers are created at the wire rate (10 kHz); the
// context resamples to the hardware rate.

import { BLOCK_SAMPLES, SAMPLE_RATE_HZ } from "./protocol.js";

export type BufferSourceLike = {
  buffer: unknown;
  connect(node: unknown): void;
  start(when: number): void;
};

export type AudioContextLike = {
  currentTime: number;
  destination: unknown;
  createBuffer(channels: number, length: number, sampleRate: number): {
    copyToChannel(src: Float32Array, channel: number): void;
  };
  createBufferSource(): BufferSourceLike;
  resume?: () => unknown;
};

export type AudioSink = {
  visualOnly: boolean;
  push(samples: Float32Array): void;
  resume(): void;
};

const BLOCK_S = BLOCK_SAMPLES / SAMPLE_RATE_HZ;
// schedule this far ahead of the playhead when (re)starting the stream
const LEAD_S = 0.03;

function defaultContext(): AudioContextLike | null {
  const Ctor =
    (globalThis as { AudioContext?: new () => AudioContextLike }).AudioContext;
  return Ctor ? new Ctor() : null;
}

export function createAudioSink(
  contextFactory: () => AudioContextLike | null = defaultContext,
): AudioSink {
  let ctx: AudioContextLike | null = null;
  try {
    ctx = contextFactory();
  } catch {
    ctx = null;
  }
  if (ctx === null) {
    console.warn("probe-ui: no audio device, visual-only mode");
    return { visualOnly: true, push() {}, resume() {} };
  }
  const audio = ctx;
  let cursor = 0;

  return {
    visualOnly: false,

    push(samples) {
      const buf = audio.createBuffer(1, samples.length, SAMPLE_RATE_HZ);
      buf.copyToChannel(samples, 0);
      const src = audio.createBufferSource();
      src.buffer = buf;
      src.connect(audio.destination);
      if (cursor < audio.currentTime + LEAD_S - BLOCK_S) {
        cursor = audio.currentTime + LEAD_S; // stream (re)start, add lead
      }
      src.start(cursor);
      cursor += samples.length / SAMPLE_RATE_HZ;
    },

    resume() {
      audio.resume?.();
    },
  };
}
