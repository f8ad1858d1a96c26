/** WebSocket client for the deformation stream. */

import type { StreamMessage } from "./types.js";

export interface SocketLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
  close(): void;
}

export function connectStream(
  onMessage: (msg: StreamMessage) => void,
  makeSocket?: (url: string) => SocketLike
): SocketLike {
  const proto = location.protocol === "https:" ? "wss" : "ws";
  const url = `${proto}://${location.host}/stream`;
  const ws = makeSocket ? makeSocket(url) : (new WebSocket(url) as SocketLike);
  ws.onmessage = (ev) => {
    try {
      onMessage(JSON.parse(ev.data) as StreamMessage);
    } catch {
      // malformed frame: ignore
    }
  };
  return ws;
}
