import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";
import { ClientMessageSchema, parseServerMessage } from "../src/schema.js";
import { initialState, reduce, canFixate } from "../src/state.js";
import { layoutScene, hitTest, FRAME_W, FRAME_H, ARROWS } from "../src/layout.js";

const here = dirname(fileURLToPath(import.meta.url));
const transcript = JSON.parse(
  readFileSync(join(here, "fixtures", "transcript.json"), "utf-8")
);

describe("wire schemas", () => {
  it("accepts every recorded server frame", () => {
    for (const msg of transcript.server_messages) {
      expect(parseServerMessage(JSON.stringify(msg))).not.toBeNull();
    }
  });

  it("accepts every recorded client frame", () => {
    for (const msg of transcript.client_messages) {
      expect(ClientMessageSchema.safeParse(msg).success).toBe(true);
    }
  });

  it("rejects envelopes with missing or wrong fields", () => {
    expect(parseServerMessage('{"type":"decode_result","seq":1,"payload":{}}')).toBeNull();
    expect(parseServerMessage('{"type":"nope","seq":1,"payload":{}}')).toBeNull();
    expect(ClientMessageSchema.safeParse({ type: "fixate", seq: 0, payload: { freq_hz: 12 } }).success).toBe(false);
    expect(ClientMessageSchema.safeParse({ type: "fixate", seq: 1, payload: {} }).success).toBe(false);
  });
});

describe("click-to-fixate path", () => {
  function sceneState() {
    let state = reduce(initialState(), { kind: "connected" });
    state = reduce(state, {
      kind: "server",
      raw: JSON.stringify(transcript.server_messages[0]),
    });
    return state;
  }

  it("a click on the 12 Hz box yields a schema-valid fixate", () => {
    const state = sceneState();
    const ops = layoutScene(state.scene!, FRAME_W, FRAME_H);
    // 12 Hz target sits at the image center in this scene
    const hz = hitTest(ops, FRAME_W / 2, FRAME_H / 2);
    expect(hz).toBe(12.0);
    expect(canFixate(state, hz)).toBe(true);
    const msg = { type: "fixate", seq: 1, payload: { freq_hz: hz } };
    expect(ClientMessageSchema.safeParse(msg).success).toBe(true);
    expect(msg).toEqual(transcript.client_messages[0]);
  });

  it("a click on empty background does not fixate", () => {
    const state = sceneState();
    const ops = layoutScene(state.scene!, FRAME_W, FRAME_H);
    const hz = hitTest(ops, 5, 5);
    expect(hz).toBeNull();
    expect(canFixate(state, hz)).toBe(false);
  });

  it("input stays disabled while a decode is pending", () => {
    let state = sceneState();
    state = reduce(state, { kind: "fixate_sent", freqHz: 12.0 });
    expect(canFixate(state, 10.0)).toBe(false);
    state = reduce(state, {
      kind: "server",
      raw: JSON.stringify(transcript.server_messages[1]),
    });
    expect(state.awaitingDecode).toBe(false);
    expect(canFixate(state, 10.0)).toBe(true);
  });
});

describe("scene layout", () => {
  it("scales centered image coordinates into the viewport", () => {
    const scene = transcript.server_messages[0].payload;
    const ops = layoutScene(scene, 640, 480); // half scale
    expect(ops).toHaveLength(3);
    const plant = ops.find((o) => o.kind === "box" && o.id === "plant")! as any;
    expect(plant.x + plant.w / 2).toBeCloseTo(320, 6);
    expect(plant.y + plant.h / 2).toBeCloseTo(240, 6);
    expect(plant.label).toBe("potted plant 12 Hz");
    expect(plant.clamped).toBe(false);
  });

  it("clamps boxes that spill past the viewport and flags them", () => {
    const scene = {
      ...transcript.server_messages[0].payload,
      detections: [
        {
          id: "edge",
          class_name: "chair",
          bbox: { cx: -630, cy: 0, w: 200, h: 300 },
          freq_hz: null,
        },
      ],
    };
    const ops = layoutScene(scene, FRAME_W, FRAME_H) as any[];
    expect(ops[0].x).toBe(0);
    expect(ops[0].clamped).toBe(true);
    expect(ops[0].label).toBe("chair");
  });

  it("arrow mode lays out three glyphs with the class frequencies", () => {
    const scene = { ...transcript.server_messages[0].payload, mode: "arrow" as const };
    const ops = layoutScene(scene, 800, 600);
    expect(ops.map((o) => (o as any).freqHz)).toEqual([10.0, 12.0, 15.0]);
    expect(ops.map((o) => (o as any).direction)).toEqual(
      ARROWS.map((a) => a.direction)
    );
    const hz = hitTest(ops, 400, 300); // center glyph
    expect(hz).toBe(12.0);
  });
});
