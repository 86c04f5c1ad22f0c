// DOM wiring for the probe playground. All logic lives in the imported
// modules; this file only binds events, blits pixel buffers, and keeps the
// HUD current.

import { createAudioSink } from "./audio.js";
import { createProbeInput } from "./input.js";
import { TICK_MS } from "./protocol.js";
import { startPump } from "./pump.js";
import { connect, Session, SessionStatus } from "./session.js";
import { createSpectrogram } from "./spectrogram.js";
import { createWaveform } from "./waveform.js";

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el;
}

const specCanvas = $("spec") as HTMLCanvasElement;
const waveCanvas = $("wave") as HTMLCanvasElement;
const pad = $("pad") as HTMLCanvasElement;
const picker = $("materials") as HTMLSelectElement;
const forceSlider = $("force") as HTMLInputElement;
const scaleField = $("px-per-mm") as HTMLInputElement;
const statusEl = $("status");
const forceEl = $("force-val");
const speedEl = $("speed-val");
const latencyEl = $("latency");

const spec = createSpectrogram();
const wave = createWaveform();
const sink = createAudioSink();
let input = createProbeInput({ pxPerMm: Number(scaleField.value) || 1 });

let firstTickAt = NaN;
let lastSample = { force: 0, speed: 0 };

const url = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;

const session: Session = connect(url, {
  onStatus(status: SessionStatus) {
    statusEl.textContent = status;
    statusEl.className = status;
  },
  onMaterials(materials, active) {
    picker.innerHTML = "";
    for (const m of materials) {
      const opt = document.createElement("option");
      opt.value = m;
      opt.textContent = m;
      opt.selected = m === active;
      picker.appendChild(opt);
    }
  },
  onSpectrum(tick, bins) {
    if (isNaN(firstTickAt)) firstTickAt = Date.now() - tick * TICK_MS;
    spec.push(bins, tick);
  },
  onAudio(block) {
    wave.push(block.samples);
    if (!sink.visualOnly) sink.push(block.samples);
  },
  onServerError(message) {
    console.warn("probe-ui: server error:", message);
  },
});

const pump = startPump((force, speed, ts) => {
  session.sendAction(force, speed, ts);
}, input);
window.addEventListener("beforeunload", () => {
  pump.stop();
  session.close();
});

picker.addEventListener("change", () => session.select(picker.value));
forceSlider.addEventListener("input", () => {
  input.setForce(Number(forceSlider.value));
});
scaleField.addEventListener("change", () => {
  input = createProbeInput({ pxPerMm: Number(scaleField.value) || 1 });
  input.setForce(Number(forceSlider.value));
});

pad.addEventListener("pointermove", (e) => {
  const r = pad.getBoundingClientRect();
  input.move(e.clientX - r.left, e.clientY - r.top, e.timeStamp);
});
pad.addEventListener("pointerdown", (e) => {
  input.setForce(Number(forceSlider.value));
  sink.resume(); // user gesture unlocks audio
  pad.setPointerCapture(e.pointerId);
});
pad.addEventListener("pointerup", () => input.release());

// the HUD shows what the pump last sent; piggyback on its sampling
const origSample = input.sample.bind(input);
function hudSample(tMs: number) {
  lastSample = origSample(tMs);
  return lastSample;
}
input.sample = hudSample;

function draw() {
  const sctx = specCanvas.getContext("2d");
  if (sctx !== null) {
    sctx.putImageData(
      new ImageData(new Uint8ClampedArray(spec.render()), spec.cols, spec.bins),
      0,
      0,
    );
  }
  const wctx = waveCanvas.getContext("2d");
  if (wctx !== null) {
    wctx.putImageData(
      new ImageData(
        new Uint8ClampedArray(wave.render(waveCanvas.width, waveCanvas.height)),
        waveCanvas.width,
        waveCanvas.height,
      ),
      0,
      0,
    );
  }
  forceEl.textContent = lastSample.force.toFixed(2);
  speedEl.textContent = lastSample.speed.toFixed(0);
  const age = isNaN(firstTickAt)
    ? NaN
    : Date.now() - (firstTickAt + spec.lastTick() * TICK_MS);
  latencyEl.textContent = isNaN(age) ? "-" : `${Math.max(age, 0).toFixed(0)} ms`;
  requestAnimationFrame(draw);
}
requestAnimationFrame(draw);
