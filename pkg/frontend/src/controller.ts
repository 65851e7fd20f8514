/**
 * Orchestrates the verdict loop against the review API.
 *
 * Headless by design: the DOM layer and the tests drive the same controller.
 * Commits are pessimistic (state changes only after the server acknowledges)
 * and 409 conflicts trigger a full queue re-sync instead of local guessing.
 */

import { ApiError } from "./api.js";
import type {
  AdvanceResult,
  Progress,
  ReviewItem,
  SessionView,
  VerdictResult,
} from "./api.js";
import {
  QueueState,
  beginReject,
  canSubmitReject,
  cancelReject,
  initialState,
  loadBatch,
  removeItem,
  selectNext,
  selectPrevious,
  selectedItem,
  setDraftFeedback,
} from "./state.js";

export type SubmitOutcome =
  | { kind: "committed" }
  | { kind: "blocked"; reason: string }
  | { kind: "resynced"; reason: string };

/** What the controller needs from the service; ReviewApi satisfies it. */
export interface ReviewApiLike {
  session(): Promise<SessionView>;
  listPending(batchId: string): Promise<ReviewItem[]>;
  progress(batchId: string): Promise<Progress>;
  submitVerdict(
    itemId: string,
    passed: boolean,
    feedback?: string,
    idempotencyKey?: string,
  ): Promise<VerdictResult>;
  advance(batchId: string): Promise<AdvanceResult>;
}

export class ReviewController {
  state: QueueState = initialState();

  constructor(
    private readonly api: ReviewApiLike,
    private readonly onChange: (state: QueueState) => void = () => {},
  ) {}

  private setState(state: QueueState): void {
    this.state = state;
    this.onChange(state);
  }

  async load(): Promise<void> {
    const session = await this.api.session();
    if (session.batch_id === null) {
      this.setState({ ...initialState(), session, notice: session.status });
      return;
    }
    const [items, progress] = await Promise.all([
      this.api.listPending(session.batch_id),
      this.api.progress(session.batch_id),
    ]);
    this.setState(loadBatch(this.state, session, items, progress));
  }

  selectNext(): void {
    this.setState(selectNext(this.state));
  }

  selectPrevious(): void {
    this.setState(selectPrevious(this.state));
  }

  beginReject(): void {
    this.setState(beginReject(this.state));
  }

  setFeedback(feedback: string): void {
    this.setState(setDraftFeedback(this.state, feedback));
  }

  cancelReject(): void {
    this.setState(cancelReject(this.state));
  }

  /** One keypress approves the current item. */
  async approveSelected(): Promise<SubmitOutcome> {
    const item = selectedItem(this.state);
    if (item === null) return { kind: "blocked", reason: "no item selected" };
    return this.submit(item.item_id, true);
  }

  /** False verdicts only leave through here, and only with feedback. */
  async submitReject(): Promise<SubmitOutcome> {
    const draft = this.state.draft;
    if (draft === null) return { kind: "blocked", reason: "no rejection open" };
    if (!canSubmitReject(this.state)) {
      return { kind: "blocked", reason: "feedback is required for a False verdict" };
    }
    return this.submit(draft.itemId, false, draft.feedback);
  }

  private async submit(
    itemId: string,
    passed: boolean,
    feedback?: string,
  ): Promise<SubmitOutcome> {
    const batchId = this.state.batchId;
    if (batchId === null) return { kind: "blocked", reason: "no active batch" };
    try {
      await this.api.submitVerdict(itemId, passed, feedback, crypto.randomUUID());
      const progress = await this.api.progress(batchId);
      this.setState(removeItem(this.state, itemId, progress));
      return { kind: "committed" };
    } catch (error) {
      if (error instanceof ApiError && (error.status === 409 || error.status === 404)) {
        await this.load(); // stale queue: somebody else verdicted it
        return { kind: "resynced", reason: error.message };
      }
      throw error;
    }
  }

  async advanceRound(): Promise<AdvanceResult | SubmitOutcome> {
    const batchId = this.state.batchId;
    if (batchId === null) return { kind: "blocked", reason: "no active batch" };
    try {
      const result = await this.api.advance(batchId);
      await this.load(); // pick up the new round (or the final status)
      return result;
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        await this.load();
        return { kind: "resynced", reason: error.message };
      }
      throw error;
    }
  }

  /**
   * Keyboard map for the verdict loop; returns false for unhandled keys.
   * t/y approve, f/n open the feedback form, Enter submits it, Escape
   * cancels, j/k or arrows move the selection.
   */
  async onKey(key: string): Promise<boolean> {
    if (this.state.draft !== null) {
      if (key === "Enter") {
        await this.submitReject();
        return true;
      }
      if (key === "Escape") {
        this.cancelReject();
        return true;
      }
      return false; // other keys type into the feedback field
    }
    switch (key) {
      case "t":
      case "y":
        await this.approveSelected();
        return true;
      case "f":
      case "n":
        this.beginReject();
        return true;
      case "j":
      case "ArrowDown":
        this.selectNext();
        return true;
      case "k":
      case "ArrowUp":
        this.selectPrevious();
        return true;
      default:
        return false;
    }
  }
}
