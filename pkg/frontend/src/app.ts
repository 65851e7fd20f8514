/**
 * Browser entry point: renders the queue side by side with the label
 * definition and wires the keyboard-driven verdict loop.
 *
 * Layout: generated note on the left, label definition and example phrases
 * on the right, round progress on top.  All displayed numbers come from the
 * server's progress view via the controller state.
 */

import { ReviewApi } from "./api.js";
import { ReviewController } from "./controller.js";
import {
  QueueState,
  accuracyDisplay,
  advanceEnabled,
  selectedItem,
  thresholdReached,
} from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

function renderProgress(state: QueueState): void {
  const progress = state.progress;
  el("round").textContent = progress
    ? `round ${progress.round_index + 1} / ${progress.max_rounds}`
    : "—";
  el("verdicted").textContent = progress
    ? `${progress.verdicted} / ${progress.total} verdicted`
    : "—";
  const accuracy = el("accuracy");
  accuracy.textContent = `accuracy ${accuracyDisplay(progress)} (threshold ${
    progress ? progress.threshold.toFixed(2) : "—"
  })`;
  accuracy.className = thresholdReached(progress) ? "good" : "";
  const bar = el<HTMLDivElement>("bar-fill");
  const ratio =
    progress && progress.accuracy !== null ? Math.min(progress.accuracy, 1) : 0;
  bar.style.width = `${ratio * 100}%`;
  el<HTMLButtonElement>("advance").disabled = !advanceEnabled(state);
  el("session-status").textContent = state.session?.status ?? "loading";
}

function renderItem(state: QueueState): void {
  const item = selectedItem(state);
  el("note").textContent = item?.generated_text ?? "queue empty";
  el("target-label").textContent = item?.label ?? "";
  el("definition").textContent = item?.definition_text ?? "";
  const snippets = el<HTMLUListElement>("snippets");
  snippets.replaceChildren(
    ...(item?.few_shot_snippets ?? []).map((phrase) => {
      const li = document.createElement("li");
      li.textContent = phrase;
      return li;
    }),
  );
  el("position").textContent = state.items.length
    ? `${state.selected + 1} of ${state.items.length} pending`
    : "nothing pending";
}

function renderDraft(state: QueueState): void {
  const form = el<HTMLDivElement>("reject-form");
  form.hidden = state.draft === null;
  const input = el<HTMLTextAreaElement>("feedback");
  if (state.draft !== null && input.value !== state.draft.feedback) {
    input.value = state.draft.feedback;
  }
  el<HTMLButtonElement>("submit-reject").disabled =
    state.draft === null || state.draft.feedback.trim().length === 0;
}

function render(state: QueueState): void {
  renderProgress(state);
  renderItem(state);
  renderDraft(state);
  el("notice").textContent = state.notice ?? "";
}

export function start(): void {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api") ?? "http://127.0.0.1:8765";
  const controller = new ReviewController(new ReviewApi(base), render);

  el<HTMLButtonElement>("approve").addEventListener("click", () => {
    void controller.approveSelected();
  });
  el<HTMLButtonElement>("reject").addEventListener("click", () => {
    controller.beginReject();
  });
  el<HTMLButtonElement>("submit-reject").addEventListener("click", () => {
    void controller.submitReject();
  });
  el<HTMLButtonElement>("cancel-reject").addEventListener("click", () => {
    controller.cancelReject();
  });
  el<HTMLButtonElement>("advance").addEventListener("click", () => {
    void controller.advanceRound();
  });
  el<HTMLTextAreaElement>("feedback").addEventListener("input", (event) => {
    controller.setFeedback((event.target as HTMLTextAreaElement).value);
  });
  document.addEventListener("keydown", (event) => {
    const target = event.target as HTMLElement;
    if (target.tagName === "TEXTAREA" && event.key !== "Enter" && event.key !== "Escape") {
      return; // let typing reach the feedback box
    }
    void controller.onKey(event.key).then((handled) => {
      if (handled) event.preventDefault();
    });
  });

  void controller.load();
}

start();
