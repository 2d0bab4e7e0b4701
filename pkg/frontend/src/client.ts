/**
 * WebSocket wrapper. Owns the client-side sequence counter and an outbound
 * queue so fixations typed during a reconnect are not silently lost. Only
 * schema-valid messages ever hit the wire.
 */
import { ClientMessage, ClientMessageSchema } from "./schema.js";
import { ConsoleEvent } from "./state.js";

const RECONNECT_MS = 1000;

export class ConsoleClient {
  private ws: WebSocket | null = null;
  private seq = 0;
  private queue: string[] = [];
  private closed = false;

  constructor(
    private url: string,
    private dispatch: (event: ConsoleEvent) => void
  ) {}

  connect(): void {
    if (this.closed) return;
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.dispatch({ kind: "connected" });
      for (const raw of this.queue.splice(0)) ws.send(raw);
    };
    ws.onmessage = (ev) => {
      this.dispatch({ kind: "server", raw: String(ev.data) });
    };
    ws.onclose = () => {
      this.ws = null;
      if (this.closed) return;
      this.dispatch({ kind: "disconnected" });
      setTimeout(() => this.connect(), RECONNECT_MS);
    };
    ws.onerror = () => ws.close();
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }

  /** Validate, stamp a fresh seq, then send (or queue while reconnecting). */
  send(type: ClientMessage["type"], payload: ClientMessage["payload"]): boolean {
    const msg = ClientMessageSchema.safeParse({ type, seq: this.seq + 1, payload });
    if (!msg.success) return false;
    this.seq += 1;
    const raw = JSON.stringify(msg.data);
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(raw);
    } else {
      this.queue.push(raw);
    }
    return true;
  }

  fixate(freqHz: number): boolean {
    return this.send("fixate", { freq_hz: freqHz });
  }
}

/** Server address from ?server=..., defaulting to the page's own host. */
export function serverUrl(loc: { search: string; host: string; protocol: string }): string {
  const param = new URLSearchParams(loc.search).get("server");
  if (param) return param;
  const scheme = loc.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${loc.host}/ws`;
}
