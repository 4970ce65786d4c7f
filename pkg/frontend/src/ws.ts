// Auto-reconnecting WebSocket feed. The console recovers from gateway
// restarts without a page reload; on each reconnect the gateway replays a
// full snapshot, and the PointBuffer dedupes any scan points we already
// hold after the REST backfill.

import type { WsMessage } from "./types.js";

const RETRY_MS = 1000;

export interface FeedHandlers {
  onOpen(): void;
  onClose(): void;
  onMessage(msg: WsMessage): void;
}

export class Feed {
  private ws: WebSocket | null = null;
  private closed = false;

  constructor(private url: string, private handlers: FeedHandlers) {
    this.connect();
  }

  private connect(): void {
    if (this.closed) return;
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => this.handlers.onOpen();
    ws.onmessage = (ev) => {
      let msg: WsMessage;
      try {
        msg = JSON.parse(ev.data as string);
      } catch {
        return; // not ours; ignore rather than break the feed
      }
      this.handlers.onMessage(msg);
    };
    ws.onclose = () => {
      this.handlers.onClose();
      if (!this.closed) {
        setTimeout(() => this.connect(), RETRY_MS);
      }
    };
    ws.onerror = () => ws.close();
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}

export function wsUrl(location: { protocol: string; host: string }): string {
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${location.host}/ws`;
}
