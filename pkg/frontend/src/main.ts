/** DOM wiring: one canvas, one reducer-held state object, one client. */
import { ConsoleClient, serverUrl } from "./client.js";
import { hitTest } from "./layout.js";
import { paint, paintPanel } from "./render.js";
import { ConsoleEvent, ConsoleState, initialState, reduce, canFixate } from "./state.js";

function byId(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el;
}

export function boot(): void {
  const canvas = byId("scene") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas unsupported");
  const panel = {
    decode: byId("decode"),
    summary: byId("summary"),
    errors: byId("errors"),
  };

  let state: ConsoleState = initialState();
  const dispatch = (event: ConsoleEvent) => {
    state = reduce(state, event);
  };

  const client = new ConsoleClient(serverUrl(window.location), dispatch);
  client.connect();

  canvas.addEventListener("click", (ev) => {
    const rect = canvas.getBoundingClientRect();
    const px = ((ev.clientX - rect.left) / rect.width) * canvas.width;
    const py = ((ev.clientY - rect.top) / rect.height) * canvas.height;
    if (!state.scene) return;
    const ops = paint(ctx, state, performance.now());
    const hz = hitTest(ops, px, py);
    if (canFixate(state, hz) && client.fixate(hz)) {
      dispatch({ kind: "fixate_sent", freqHz: hz });
    }
  });

  for (const cmd of ["start", "pause", "resume", "reset"] as const) {
    byId(`btn-${cmd}`).addEventListener("click", () => client.send(cmd, {}));
  }

  const frame = (t: number) => {
    paint(ctx, state, t);
    paintPanel(panel, state);
    requestAnimationFrame(frame);
  };
  requestAnimationFrame(frame);
}

boot();
