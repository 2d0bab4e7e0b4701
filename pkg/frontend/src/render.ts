/** Thin canvas painter over the pure layout. */
import { ConsoleState, summaryView, CLASS_FREQS } from "./state.js";
import { layoutScene, DrawOp, flickerOn } from "./layout.js";

export function paint(
  ctx: CanvasRenderingContext2D,
  state: ConsoleState,
  timeMs: number
): DrawOp[] {
  const { width, height } = ctx.canvas;
  ctx.fillStyle = "#111418";
  ctx.fillRect(0, 0, width, height);

  if (!state.scene) {
    ctx.fillStyle = "#8a929c";
    ctx.font = "16px system-ui, sans-serif";
    ctx.fillText(`(${state.connection})`, 16, 28);
    return [];
  }

  const ops = layoutScene(state.scene, width, height);
  for (const op of ops) {
    if (op.kind === "box") {
      const lit = op.freqHz !== null && flickerOn(op.freqHz, timeMs);
      ctx.strokeStyle = lit ? "#ffffff" : op.freqHz === null ? "#555c66" : "#4caf50";
      ctx.lineWidth = op.freqHz === state.selectedHz ? 4 : 2;
      if (op.clamped) ctx.setLineDash([6, 4]);
      ctx.strokeRect(op.x, op.y, op.w, op.h);
      ctx.setLineDash([]);
      ctx.fillStyle = "#e6e8eb";
      ctx.font = "13px system-ui, sans-serif";
      ctx.fillText(op.label, op.x + 4, Math.max(op.y - 6, 14));
    } else {
      const lit = flickerOn(op.freqHz, timeMs);
      ctx.fillStyle = lit ? "#ffffff" : "#4c7faf";
      ctx.font = `${Math.round(op.size)}px system-ui, sans-serif`;
      ctx.textAlign = "center";
      ctx.textBaseline = "middle";
      const glyph = op.direction === "left" ? "←" : op.direction === "right" ? "→" : "↺";
      ctx.fillText(glyph, op.x, op.y);
      ctx.font = "14px system-ui, sans-serif";
      ctx.fillText(`${op.freqHz} Hz`, op.x, op.y + op.size * 0.75);
      ctx.textAlign = "start";
      ctx.textBaseline = "alphabetic";
    }
  }

  // status strip
  ctx.fillStyle = "#e6e8eb";
  ctx.font = "14px system-ui, sans-serif";
  const s = state.scene;
  ctx.fillText(
    `${s.state}  mode=${s.mode}  pose=(${s.pose.x.toFixed(2)}, ${s.pose.y.toFixed(2)})  ` +
      `trial ${s.trial}  [${state.connection}]`,
    16,
    height - 14
  );
  if (state.awaitingDecode) {
    ctx.fillStyle = "#f0c040";
    ctx.fillText("decoding…", width - 110, height - 14);
  }
  return ops;
}

/** Fill the side-panel DOM nodes from state; no logic beyond formatting. */
export function paintPanel(
  el: { decode: HTMLElement; summary: HTMLElement; errors: HTMLElement },
  state: ConsoleState
): void {
  const d = state.decode;
  if (d) {
    const probs = d.probs.map((p, i) => `${CLASS_FREQS[i]} Hz: ${(p * 100).toFixed(1)}%`).join("  ");
    el.decode.textContent =
      `decoded ${CLASS_FREQS[d.predicted_class]} Hz ` +
      `(true ${CLASS_FREQS[d.true_class]} Hz, ${d.latency_ms.toFixed(0)} ms) -> ${d.command}\n${probs}`;
  } else {
    el.decode.textContent = "no decodes yet";
  }
  const sv = summaryView(state);
  if (sv) {
    const rows = sv.rows.map((r) => r.cells.join(" ")).join("\n");
    el.summary.textContent = `accuracy ${sv.accuracyPct}  ITR ${sv.itr}\nconfusion (rows = true):\n${rows}`;
  } else {
    el.summary.textContent = "";
  }
  el.errors.textContent = state.lastError ?? "";
}
