/**
 * Wire protocol schemas. The server owns all state; every message in either
 * direction is an envelope {type, seq, payload} with per-direction strictly
 * increasing seq.
 */
import { z } from "zod";

export const BBoxSchema = z.object({
  cx: z.number(),
  cy: z.number(),
  w: z.number().positive(),
  h: z.number().positive(),
});

export const DetectionSchema = z.object({
  id: z.string(),
  class_name: z.string(),
  bbox: BBoxSchema,
  freq_hz: z.number().nullable(),
});

export const ScenePayloadSchema = z.object({
  state: z.string(),
  pose: z.object({ x: z.number(), y: z.number(), heading: z.number() }),
  detections: z.array(DetectionSchema),
  mode: z.enum(["object", "arrow"]),
  experiment: z.number().int(),
  trial: z.number().int().nonnegative(),
});

export const DecodePayloadSchema = z.object({
  true_class: z.number(),
  predicted_class: z.number(),
  probs: z.array(z.number()).length(3),
  latency_ms: z.number().nonnegative(),
  command: z.string(),
});

export const SummaryPayloadSchema = z.object({
  accuracy: z.number().min(0).max(1),
  itr_bpm: z.number(),
  confusion: z.array(z.array(z.number().int().nonnegative()).length(3)).length(3),
});

export const ErrorPayloadSchema = z.object({
  code: z.string(),
  message: z.string(),
});

export const ServerMessageSchema = z.discriminatedUnion("type", [
  z.object({ type: z.literal("scene_update"), seq: z.number().int(), payload: ScenePayloadSchema }),
  z.object({ type: z.literal("decode_result"), seq: z.number().int(), payload: DecodePayloadSchema }),
  z.object({ type: z.literal("session_summary"), seq: z.number().int(), payload: SummaryPayloadSchema }),
  z.object({ type: z.literal("error"), seq: z.number().int(), payload: ErrorPayloadSchema }),
]);

export const ClientMessageSchema = z.discriminatedUnion("type", [
  z.object({ type: z.literal("fixate"), seq: z.number().int().positive(), payload: z.object({ freq_hz: z.number() }) }),
  z.object({ type: z.literal("start"), seq: z.number().int().positive(), payload: z.object({}) }),
  z.object({ type: z.literal("pause"), seq: z.number().int().positive(), payload: z.object({}) }),
  z.object({ type: z.literal("resume"), seq: z.number().int().positive(), payload: z.object({}) }),
  z.object({ type: z.literal("reset"), seq: z.number().int().positive(), payload: z.object({}) }),
]);

export type Detection = z.infer<typeof DetectionSchema>;
export type ScenePayload = z.infer<typeof ScenePayloadSchema>;
export type DecodePayload = z.infer<typeof DecodePayloadSchema>;
export type SummaryPayload = z.infer<typeof SummaryPayloadSchema>;
export type ServerMessage = z.infer<typeof ServerMessageSchema>;
export type ClientMessage = z.infer<typeof ClientMessageSchema>;

/** Parse one raw server frame; returns null for malformed input (the UI
 * drops it and shows a toast, never crashes). */
export function parseServerMessage(raw: string): ServerMessage | null {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    return null;
  }
  const result = ServerMessageSchema.safeParse(doc);
  return result.success ? result.data : null;
}
