/** DOM rendering helpers; pure functions of state so tests can assert markup. */

import type { Candidate, Controls, TranscriptEntry } from "./types.js";
import { ALPHA_MAX, ALPHA_MIN, CANDIDATE_CHOICES } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  testid?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (testid) node.dataset.testid = testid;
  return node;
}

export function renderTranscript(
  container: HTMLElement,
  entries: TranscriptEntry[],
): void {
  const doc = container.ownerDocument;
  container.textContent = "";
  for (const entry of entries) {
    const row = el(doc, "div", `turn ${entry.speaker}`, "turn");
    const speaker = el(doc, "span", "speaker");
    speaker.textContent = entry.speaker === "human" ? "you" : "bot";
    const text = el(doc, "span", "text", "turn-text");
    text.textContent = entry.text;
    row.append(speaker, text);
    if (entry.rank !== null && entry.rank !== undefined) {
      const badge = el(doc, "span", "badge", "rank-badge");
      badge.textContent = `rank ${entry.rank}`;
      row.append(badge);
    }
    container.append(row);
  }
}

export interface CandidatePanelState {
  candidates: Candidate[];
  /** set when the list is already committed (greyed, no picking) */
  committedRank: number | null;
  busy: boolean;
  onPick: (rank: number) => void;
}

export function renderCandidates(
  container: HTMLElement,
  state: CandidatePanelState,
): void {
  const doc = container.ownerDocument;
  container.textContent = "";
  const committed = state.committedRank !== null;
  container.classList.toggle("committed", committed);
  for (const cand of state.candidates) {
    const row = el(doc, "div", "candidate", "candidate");
    if (committed) row.classList.add("greyed");
    if (committed && cand.rank === state.committedRank) {
      row.classList.add("chosen");
    }
    row.dataset.rank = String(cand.rank);

    const pick = el(doc, "button", "pick", "pick-button");
    pick.textContent = `#${cand.rank}`;
    pick.disabled = committed || state.busy;
    pick.addEventListener("click", () => state.onPick(cand.rank));

    const bar = el(doc, "div", "score-track");
    const fill = el(doc, "div", "score-bar", "score-bar");
    const pct = Math.max(0, Math.min(1, cand.d_score)) * 100;
    fill.style.width = `${pct.toFixed(1)}%`;
    fill.dataset.score = cand.d_score.toFixed(6);
    bar.append(fill);

    const text = el(doc, "span", "text", "candidate-text");
    text.textContent = cand.text === "" ? "(empty)" : cand.text;

    const meta = el(doc, "span", "meta", "candidate-meta");
    meta.textContent = `d ${cand.d_score.toFixed(3)} lp ${cand.log_prob.toFixed(2)}`;

    row.append(pick, bar, text, meta);
    container.append(row);
  }
}

export interface ControlsState {
  controls: Controls;
  onChange: (next: Controls) => void;
}

export function renderControls(
  container: HTMLElement,
  state: ControlsState,
): void {
  const doc = container.ownerDocument;
  container.textContent = "";
  const { controls, onChange } = state;

  const alphaLabel = el(doc, "label", "control");
  alphaLabel.append("exploration α ");
  const alpha = el(doc, "input", "", "alpha-slider");
  alpha.type = "range";
  alpha.min = String(ALPHA_MIN);
  alpha.max = String(ALPHA_MAX);
  alpha.step = "1";
  alpha.value = String(controls.alpha);
  const alphaValue = el(doc, "span", "value", "alpha-value");
  alphaValue.textContent = String(controls.alpha);
  alpha.addEventListener("input", () => {
    onChange({ ...controls, alpha: Number(alpha.value) });
  });
  alphaLabel.append(alpha, alphaValue);

  const lLabel = el(doc, "label", "control");
  lLabel.append("candidates L ");
  const lSelect = el(doc, "select", "", "l-select");
  for (const choice of CANDIDATE_CHOICES) {
    const opt = doc.createElement("option");
    opt.value = String(choice);
    opt.textContent = String(choice);
    if (choice === controls.numCandidates) opt.selected = true;
    lSelect.append(opt);
  }
  lSelect.value = String(controls.numCandidates);
  lSelect.addEventListener("change", () => {
    onChange({ ...controls, numCandidates: Number(lSelect.value) });
  });
  lLabel.append(lSelect);

  const autoLabel = el(doc, "label", "control");
  const auto = el(doc, "input", "", "auto-commit");
  auto.type = "checkbox";
  auto.checked = controls.autoCommit;
  auto.addEventListener("change", () => {
    onChange({ ...controls, autoCommit: auto.checked });
  });
  autoLabel.append(auto, " auto-commit best");

  container.append(alphaLabel, lLabel, autoLabel);
}

export function renderError(
  container: HTMLElement,
  message: string | null,
  onRetry: (() => void) | null,
): void {
  const doc = container.ownerDocument;
  container.textContent = "";
  container.classList.toggle("hidden", message === null);
  if (message === null) return;
  const span = el(doc, "span", "message", "error-message");
  span.textContent = message;
  container.append(span);
  if (onRetry) {
    const retry = el(doc, "button", "retry", "retry-button");
    retry.textContent = "retry";
    retry.addEventListener("click", onRetry);
    container.append(retry);
  }
}
