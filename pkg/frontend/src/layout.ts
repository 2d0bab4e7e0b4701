/**
 * Scene layout: image-plane boxes -> viewport draw ops. Split from the
 * canvas painter so the geometry (scaling, clamping, hit-testing, arrow
 * placement) is plain data and unit-testable.
 */
import { ScenePayload } from "./schema.js";

/** Server-side image plane: 1280x960 with (0,0) at the image center,
 * x rightward and y downward. */
export const FRAME_W = 1280;
export const FRAME_H = 960;

export interface BoxOp {
  kind: "box";
  id: string;
  label: string;
  freqHz: number | null;
  x: number;
  y: number;
  w: number;
  h: number;
  /** true when the box ran off the frame and was clamped to the edge */
  clamped: boolean;
}

export interface ArrowOp {
  kind: "arrow";
  direction: "left" | "right" | "back";
  freqHz: number;
  x: number;
  y: number;
  size: number;
}

export type DrawOp = BoxOp | ArrowOp;

export const ARROWS: { direction: "left" | "right" | "back"; freqHz: number }[] = [
  { direction: "left", freqHz: 10.0 },
  { direction: "right", freqHz: 12.0 },
  { direction: "back", freqHz: 15.0 },
];

export function layoutScene(
  scene: ScenePayload,
  viewW: number,
  viewH: number
): DrawOp[] {
  if (scene.mode === "arrow") {
    const size = Math.min(viewW, viewH) / 5;
    const y = viewH / 2;
    return ARROWS.map((a, i) => ({
      kind: "arrow" as const,
      direction: a.direction,
      freqHz: a.freqHz,
      x: ((i + 1) * viewW) / 4,
      y,
      size,
    }));
  }
  const sx = viewW / FRAME_W;
  const sy = viewH / FRAME_H;
  return scene.detections.map((d) => {
    let x = (d.bbox.cx + FRAME_W / 2 - d.bbox.w / 2) * sx;
    let y = (d.bbox.cy + FRAME_H / 2 - d.bbox.h / 2) * sy;
    let w = d.bbox.w * sx;
    let h = d.bbox.h * sy;
    let clamped = false;
    if (x < 0) { w += x; x = 0; clamped = true; }
    if (y < 0) { h += y; y = 0; clamped = true; }
    if (x + w > viewW) { w = viewW - x; clamped = true; }
    if (y + h > viewH) { h = viewH - y; clamped = true; }
    return {
      kind: "box" as const,
      id: d.id,
      label: d.freq_hz === null ? d.class_name : `${d.class_name} ${d.freq_hz} Hz`,
      freqHz: d.freq_hz,
      x,
      y,
      w: Math.max(w, 1),
      h: Math.max(h, 1),
      clamped,
    };
  });
}

/** Frequency under a viewport click, or null when nothing fixatable. */
export function hitTest(ops: DrawOp[], px: number, py: number): number | null {
  // later ops draw on top, so test them first
  for (let i = ops.length - 1; i >= 0; i--) {
    const op = ops[i];
    if (op.kind === "box") {
      if (px >= op.x && px <= op.x + op.w && py >= op.y && py <= op.y + op.h) {
        return op.freqHz; // null for an unassigned object: caller shows a hint
      }
    } else {
      const half = op.size / 2;
      if (Math.abs(px - op.x) <= half && Math.abs(py - op.y) <= half) {
        return op.freqHz;
      }
    }
  }
  return null;
}

/** Decorative square-wave flicker phase for a stimulus frequency. */
export function flickerOn(freqHz: number, timeMs: number): boolean {
  return Math.floor((timeMs / 1000) * freqHz * 2) % 2 === 0;
}
