/**
 * Single reducer for all console state. Rendering is a pure function of
 * ConsoleState; no decode, pose or transition logic lives client-side.
 */
import {
  DecodePayload,
  ScenePayload,
  ServerMessage,
  SummaryPayload,
  parseServerMessage,
} from "./schema.js";

export type ConnectionStatus = "connecting" | "open" | "reconnecting";

export interface ConsoleState {
  connection: ConnectionStatus;
  scene: ScenePayload | null;
  decode: DecodePayload | null;
  summary: SummaryPayload | null;
  /** frequency of the stimulus the operator last clicked */
  selectedHz: number | null;
  /** input disabled between a fixate and its decode_result / error */
  awaitingDecode: boolean;
  lastError: string | null;
  lastServerSeq: number;
  droppedMessages: number;
}

export function initialState(): ConsoleState {
  return {
    connection: "connecting",
    scene: null,
    decode: null,
    summary: null,
    selectedHz: null,
    awaitingDecode: false,
    lastError: null,
    lastServerSeq: 0,
    droppedMessages: 0,
  };
}

export type ConsoleEvent =
  | { kind: "server"; raw: string }
  | { kind: "connected" }
  | { kind: "disconnected" }
  | { kind: "fixate_sent"; freqHz: number };

export function reduce(state: ConsoleState, event: ConsoleEvent): ConsoleState {
  switch (event.kind) {
    case "connected":
      return { ...state, connection: "open" };
    case "disconnected":
      return { ...state, connection: "reconnecting", awaitingDecode: false };
    case "fixate_sent":
      return { ...state, selectedHz: event.freqHz, awaitingDecode: true };
    case "server":
      return applyServer(state, parseServerMessage(event.raw));
  }
}

function applyServer(state: ConsoleState, msg: ServerMessage | null): ConsoleState {
  if (msg === null) {
    return {
      ...state,
      droppedMessages: state.droppedMessages + 1,
      lastError: "malformed message from server",
    };
  }
  if (msg.seq <= state.lastServerSeq) {
    // out-of-order or replayed frame: ignore it, state is newer
    return { ...state, droppedMessages: state.droppedMessages + 1 };
  }
  const next = { ...state, lastServerSeq: msg.seq };
  switch (msg.type) {
    case "scene_update":
      return { ...next, scene: msg.payload };
    case "decode_result":
      return { ...next, decode: msg.payload, awaitingDecode: false };
    case "session_summary":
      return { ...next, summary: msg.payload };
    case "error":
      return {
        ...next,
        lastError: `${msg.payload.code}: ${msg.payload.message}`,
        awaitingDecode: false,
      };
  }
}

export const CLASS_FREQS = [10.0, 12.0, 15.0] as const;

/** Confusion matrix cells plus the headline numbers, ready for display. */
export interface SummaryView {
  accuracyPct: string;
  itr: string;
  rows: { trueHz: number; cells: number[] }[];
}

export function summaryView(state: ConsoleState): SummaryView | null {
  if (state.summary === null) return null;
  return {
    accuracyPct: (state.summary.accuracy * 100).toFixed(1) + "%",
    itr: state.summary.itr_bpm.toFixed(2) + " bpm",
    rows: CLASS_FREQS.map((hz, i) => ({
      trueHz: hz,
      cells: state.summary!.confusion[i],
    })),
  };
}

/** A click may only turn into a fixate when the target has a frequency
 * assigned and no decode is pending. */
export function canFixate(state: ConsoleState, freqHz: number | null): freqHz is number {
  return (
    freqHz !== null &&
    !state.awaitingDecode &&
    state.scene !== null &&
    state.connection !== "connecting"
  );
}
