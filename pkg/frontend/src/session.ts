// WebSocket session wrapper: typed message dispatch plus reconnection with
// exponential backoff (250 ms doubling to a 5 s cap). The socket factory is
// injectable so every test runs against a scripted fake, never a live
// service.

import {
  AudioBlock,
  ServerMsg,
  actionMessage,
  decodeAudioBlock,
  parseServerMessage,
  selectMessage,
} from "./protocol.js";

export type SocketLike = {
  binaryType?: string;
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: string | ArrayBuffer }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
};

export type SocketFactory = (url: string) => SocketLike;

export type SessionStatus = "connecting" | "connected" | "reconnecting" | "closed";

export type SessionEvents = {
  onStatus?: (status: SessionStatus) => void;
  onMaterials?: (materials: string[], active: string) => void;
  onSpectrum?: (tick: number, bins: number[]) => void;
  onAudio?: (block: AudioBlock) => void;
  onServerError?: (message: string) => void;
};

export type Session = {
  status(): SessionStatus;
  sendAction(force: number, speed: number, ts?: number): void;
  select(material: string): void;
  sendTick(): void;
  close(): void;
};

const BACKOFF_BASE_MS = 250;
const BACKOFF_CAP_MS = 5000;

function browserFactory(url: string): SocketLike {
  return new WebSocket(url) as unknown as SocketLike;
}

export function connect(
  url: string,
  events: SessionEvents = {},
  factory: SocketFactory = browserFactory,
): Session {
  let socket: SocketLike | null = null;
  let status: SessionStatus = "connecting";
  let attempt = 0;
  let closedByUser = false;
  let retryTimer: ReturnType<typeof setTimeout> | null = null;

  function setStatus(next: SessionStatus) {
    if (status === next) return;
    status = next;
    events.onStatus?.(next);
  }

  function dispatch(msg: ServerMsg) {
    if (msg.t === "materials") events.onMaterials?.(msg.materials, msg.active);
    else if (msg.t === "spectrum") events.onSpectrum?.(msg.tick, msg.bins);
    else events.onServerError?.(msg.message);
  }

  function open() {
    const ws = factory(url);
    socket = ws;
    if ("binaryType" in ws) ws.binaryType = "arraybuffer";
    ws.onopen = () => {
      attempt = 0;
      setStatus("connected");
    };
    ws.onmessage = (ev) => {
      if (typeof ev.data === "string") {
        const msg = parseServerMessage(ev.data);
        if (msg !== null) dispatch(msg);
      } else {
        const block = decodeAudioBlock(ev.data);
        if (block !== null) events.onAudio?.(block);
      }
    };
    ws.onerror = () => {
      // close always follows; reconnect handled there
    };
    ws.onclose = () => {
      if (socket !== ws) return;
      socket = null;
      if (closedByUser) {
        setStatus("closed");
        return;
      }
      setStatus("reconnecting");
      const delay = Math.min(BACKOFF_BASE_MS * 2 ** attempt, BACKOFF_CAP_MS);
      attempt += 1;
      retryTimer = setTimeout(open, delay);
    };
  }

  open();

  function sendText(text: string) {
    if (status === "connected" && socket !== null) socket.send(text);
  }

  return {
    status: () => status,
    sendAction(force, speed, ts) {
      sendText(actionMessage(force, speed, ts ?? Date.now()));
    },
    select(material) {
      sendText(selectMessage(material));
    },
    sendTick() {
      sendText(JSON.stringify({ t: "tick" }));
    },
    close() {
      closedByUser = true;
      if (retryTimer !== null) clearTimeout(retryTimer);
      if (socket !== null) socket.close();
      else setStatus("closed");
    },
  };
}
