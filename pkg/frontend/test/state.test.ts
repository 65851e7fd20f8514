import { describe, expect, it } from "vitest";

import type {
  AdvanceResult,
  Progress,
  ReviewItem,
  SessionView,
  VerdictResult,
} from "../src/api.js";
import { ReviewController, ReviewApiLike } from "../src/controller.js";
import {
  accuracyDisplay,
  advanceEnabled,
  beginReject,
  canSubmitReject,
  initialState,
  loadBatch,
  removeItem,
  selectNext,
  selectedItem,
  setDraftFeedback,
  thresholdReached,
} from "../src/state.js";

function session(overrides: Partial<SessionView> = {}): SessionView {
  return {
    label: "t3_Eviction_pending",
    status: "reviewing",
    round_index: 0,
    max_rounds: 3,
    threshold: 0.9,
    batch_id: "b0",
    accepted_total: 0,
    ...overrides,
  };
}

function item(id: string): ReviewItem {
  return {
    item_id: id,
    batch_id: "b0",
    label: "t3_Eviction_pending",
    generated_text: `note ${id}`,
    definition_text: "definition text",
    few_shot_snippets: ["example"],
    status: "pending",
  };
}

function progress(overrides: Partial<Progress> = {}): Progress {
  return {
    batch_id: "b0",
    verdicted: 0,
    total: 3,
    accuracy: null,
    threshold: 0.9,
    round_index: 0,
    max_rounds: 3,
    status: "reviewing",
    ...overrides,
  };
}

describe("queue state", () => {
  it("is a pure projection of server responses", () => {
    const state = loadBatch(
      initialState(),
      session(),
      [item("a"), item("b")],
      progress(),
    );
    expect(state.batchId).toBe("b0");
    expect(state.items.map((i) => i.item_id)).toEqual(["a", "b"]);
    expect(selectedItem(state)?.item_id).toBe("a");
  });

  it("wraps selection", () => {
    let state = loadBatch(initialState(), session(), [item("a"), item("b")], progress());
    state = selectNext(state);
    expect(selectedItem(state)?.item_id).toBe("b");
    state = selectNext(state);
    expect(selectedItem(state)?.item_id).toBe("a");
  });

  it("blocks a False verdict until feedback is present", () => {
    let state = loadBatch(initialState(), session(), [item("a")], progress());
    state = beginReject(state);
    expect(canSubmitReject(state)).toBe(false);
    state = setDraftFeedback(state, "   ");
    expect(canSubmitReject(state)).toBe(false);
    state = setDraftFeedback(state, "wrong timeframe");
    expect(canSubmitReject(state)).toBe(true);
  });

  it("removes items only with a fresh server progress", () => {
    let state = loadBatch(
      initialState(),
      session(),
      [item("a"), item("b")],
      progress(),
    );
    state = removeItem(state, "a", progress({ verdicted: 1, accuracy: 1.0 }));
    expect(state.items.map((i) => i.item_id)).toEqual(["b"]);
    expect(state.progress?.verdicted).toBe(1);
  });

  it("enables advance only when everything is verdicted", () => {
    const notDone = loadBatch(
      initialState(),
      session(),
      [item("a")],
      progress({ verdicted: 2, total: 3 }),
    );
    expect(advanceEnabled(notDone)).toBe(false);
    const done = loadBatch(
      initialState(),
      session(),
      [],
      progress({ verdicted: 3, total: 3, accuracy: 2 / 3 }),
    );
    expect(advanceEnabled(done)).toBe(true);
  });

  it("displays exactly the server accuracy", () => {
    expect(accuracyDisplay(null)).toBe("—");
    expect(accuracyDisplay(progress({ accuracy: null }))).toBe("—");
    expect(accuracyDisplay(progress({ accuracy: 0.9 }))).toBe("0.90");
    expect(thresholdReached(progress({ accuracy: 0.9 }))).toBe(true);
    expect(thresholdReached(progress({ accuracy: 0.89 }))).toBe(false);
  });
});

class FakeApi implements ReviewApiLike {
  items: ReviewItem[] = [item("a"), item("b"), item("c")];
  verdicts: Array<{ itemId: string; passed: boolean; feedback?: string }> = [];
  conflictOn = new Set<string>();

  async session(): Promise<SessionView> {
    return session();
  }

  async listPending(): Promise<ReviewItem[]> {
    return [...this.items];
  }

  async progress(): Promise<Progress> {
    return progress({
      verdicted: this.verdicts.length,
      total: 3,
      accuracy: this.verdicts.length
        ? this.verdicts.filter((v) => v.passed).length / this.verdicts.length
        : null,
    });
  }

  async submitVerdict(
    itemId: string,
    passed: boolean,
    feedback?: string,
  ): Promise<VerdictResult> {
    if (this.conflictOn.has(itemId)) {
      const { ApiError } = await import("../src/api.js");
      throw new ApiError(409, "AlreadyVerdictedError", "already verdicted");
    }
    this.verdicts.push({ itemId, passed, feedback });
    this.items = this.items.filter((i) => i.item_id !== itemId);
    return { item_id: itemId, batch_id: "b0", status: "verdicted", passed };
  }

  async advance(): Promise<AdvanceResult> {
    return {
      status: "accepted",
      accuracy: 1.0,
      round_index: 1,
      accepted_total: 3,
    };
  }
}

describe("controller", () => {
  it("commits pessimistically and moves on", async () => {
    const api = new FakeApi();
    const controller = new ReviewController(api);
    await controller.load();
    const outcome = await controller.approveSelected();
    expect(outcome).toEqual({ kind: "committed" });
    expect(api.verdicts).toEqual([{ itemId: "a", passed: true, feedback: undefined }]);
    expect(controller.state.items.map((i) => i.item_id)).toEqual(["b", "c"]);
    expect(controller.state.progress?.verdicted).toBe(1);
  });

  it("refuses to submit a False verdict without feedback", async () => {
    const api = new FakeApi();
    const controller = new ReviewController(api);
    await controller.load();
    await controller.onKey("f");
    const blocked = await controller.submitReject();
    expect(blocked.kind).toBe("blocked");
    expect(api.verdicts).toEqual([]);
    controller.setFeedback("does not match the label definition");
    const ok = await controller.submitReject();
    expect(ok).toEqual({ kind: "committed" });
    expect(api.verdicts[0]?.feedback).toBe("does not match the label definition");
  });

  it("resyncs the queue on a 409 conflict", async () => {
    const api = new FakeApi();
    api.conflictOn.add("a");
    const controller = new ReviewController(api);
    await controller.load();
    // simulate the server already knowing about "a"
    api.items = api.items.filter((i) => i.item_id !== "a");
    const outcome = await controller.approveSelected();
    expect(outcome.kind).toBe("resynced");
    expect(controller.state.items.map((i) => i.item_id)).toEqual(["b", "c"]);
  });

  it("keyboard loop approves with a single key", async () => {
    const api = new FakeApi();
    const controller = new ReviewController(api);
    await controller.load();
    expect(await controller.onKey("t")).toBe(true);
    expect(api.verdicts.length).toBe(1);
    expect(await controller.onKey("q")).toBe(false);
  });
});
