/**
 * Review-queue state: a pure projection of the last server responses.
 *
 * Nothing in here recomputes counts or accuracy; those always come from the
 * server's progress view, so the numbers on screen can never drift from what
 * the service would report.  Verdicts are committed pessimistically: an item
 * leaves the queue only after the server acknowledges it.
 */

import type { Progress, ReviewItem, SessionView } from "./api.js";

export interface RejectDraft {
  itemId: string;
  feedback: string;
}

export interface QueueState {
  session: SessionView | null;
  batchId: string | null;
  /** Pending items as last reported by the server. */
  items: ReviewItem[];
  /** Index of the item under review. */
  selected: number;
  /** Last server progress view; the only source of displayed counts. */
  progress: Progress | null;
  /** Open False-verdict draft; submit stays blocked until feedback exists. */
  draft: RejectDraft | null;
  notice: string | null;
}

export function initialState(): QueueState {
  return {
    session: null,
    batchId: null,
    items: [],
    selected: 0,
    progress: null,
    draft: null,
    notice: null,
  };
}

export function loadBatch(
  state: QueueState,
  session: SessionView,
  items: ReviewItem[],
  progress: Progress,
): QueueState {
  return {
    ...state,
    session,
    batchId: progress.batch_id,
    items,
    selected: Math.min(state.selected, Math.max(items.length - 1, 0)),
    progress,
    draft: null,
  };
}

export function selectedItem(state: QueueState): ReviewItem | null {
  return state.items[state.selected] ?? null;
}

export function selectNext(state: QueueState): QueueState {
  if (state.items.length === 0) return state;
  return {
    ...state,
    selected: (state.selected + 1) % state.items.length,
    draft: null,
  };
}

export function selectPrevious(state: QueueState): QueueState {
  if (state.items.length === 0) return state;
  return {
    ...state,
    selected: (state.selected - 1 + state.items.length) % state.items.length,
    draft: null,
  };
}

export function beginReject(state: QueueState): QueueState {
  const item = selectedItem(state);
  if (item === null) return state;
  return { ...state, draft: { itemId: item.item_id, feedback: "" } };
}

export function setDraftFeedback(state: QueueState, feedback: string): QueueState {
  if (state.draft === null) return state;
  return { ...state, draft: { ...state.draft, feedback } };
}

export function cancelReject(state: QueueState): QueueState {
  return { ...state, draft: null };
}

/** The mandatory-feedback rule: a False verdict without feedback cannot go out. */
export function canSubmitReject(state: QueueState): boolean {
  return state.draft !== null && state.draft.feedback.trim().length > 0;
}

/** Server acknowledged a verdict: drop the item, keep position sensible. */
export function removeItem(
  state: QueueState,
  itemId: string,
  progress: Progress,
): QueueState {
  const items = state.items.filter((item) => item.item_id !== itemId);
  return {
    ...state,
    items,
    selected: Math.min(state.selected, Math.max(items.length - 1, 0)),
    progress,
    draft: null,
  };
}

export function advanceEnabled(state: QueueState): boolean {
  const progress = state.progress;
  return (
    progress !== null &&
    progress.total > 0 &&
    progress.verdicted === progress.total &&
    progress.status === "reviewing"
  );
}

/** Displayed accuracy: exactly the server's number, formatted. */
export function accuracyDisplay(progress: Progress | null): string {
  if (progress === null || progress.accuracy === null) return "—";
  return progress.accuracy.toFixed(2);
}

export function thresholdReached(progress: Progress | null): boolean {
  return (
    progress !== null &&
    progress.accuracy !== null &&
    progress.accuracy >= progress.threshold
  );
}
