/**
 * Pure state machine for one annotator's review session.
 *
 * All UI behavior that matters lives here so it is testable without a
 * DOM: optimistic submit with rollback, the in-flight double-submit
 * guard, the retry banner on network failure, and the token prompt on
 * 401.  The DOM layer only dispatches events and paints the state.
 */

import type { AuditItem, NextResponse } from "./api.js";

export type Phase =
  | "loading"
  | "item"
  | "submitting"
  | "done"
  | "auth"
  | "error";

export interface SessionState {
  phase: Phase;
  item: AuditItem | null;
  total: number;
  reviewed: number;
  overlayVisible: boolean;
  serverOverlay: boolean;
  toast: string | null;
  error: string | null;
}

export const initialState: SessionState = {
  phase: "loading",
  item: null,
  total: 0,
  reviewed: 0,
  overlayVisible: true,
  serverOverlay: false,
  toast: null,
  error: null,
};

export type SessionEvent =
  | { kind: "next-ok"; response: NextResponse }
  | { kind: "next-auth-failed" }
  | { kind: "next-failed"; message: string }
  | { kind: "retry" }
  | { kind: "submit-started" }
  | { kind: "submit-ok" }
  | { kind: "submit-failed"; message: string }
  | { kind: "toggle-overlay" }
  | { kind: "toggle-server-overlay" }
  | { kind: "dismiss-toast" };

/** True when a verdict may be submitted right now. */
export function canSubmit(state: SessionState): boolean {
  return state.phase === "item" && state.item !== null;
}

export function reduce(
  state: SessionState,
  event: SessionEvent,
): SessionState {
  switch (event.kind) {
    case "next-ok": {
      const { response } = event;
      if (response.done) {
        return {
          ...state,
          phase: "done",
          item: null,
          total: response.total,
          error: null,
        };
      }
      return {
        ...state,
        phase: "item",
        item: response.item,
        total: response.total,
        error: null,
      };
    }
    case "next-auth-failed":
      return { ...state, phase: "auth", item: null, error: null };
    case "next-failed":
      // The vote (if any) is already recorded or already rolled back;
      // only the fetch of the next item failed, so offer a retry.
      return { ...state, phase: "error", error: event.message };
    case "retry":
      return { ...state, phase: "loading", error: null };
    case "submit-started":
      // Guard: ignore while a submit is in flight or no item is shown.
      if (!canSubmit(state)) {
        return state;
      }
      return { ...state, phase: "submitting", toast: null };
    case "submit-ok":
      return {
        ...state,
        phase: "loading",
        item: null,
        reviewed: state.reviewed + 1,
        toast: null,
      };
    case "submit-failed":
      // Rollback: keep the same item on screen and surface the reason.
      return { ...state, phase: "item", toast: event.message };
    case "toggle-overlay":
      return { ...state, overlayVisible: !state.overlayVisible };
    case "toggle-server-overlay":
      return { ...state, serverOverlay: !state.serverOverlay };
    case "dismiss-toast":
      return { ...state, toast: null };
  }
}
