/**
 * DOM rendering for the annotation screen. Pure re-render from a session
 * snapshot; all text lands via textContent, never innerHTML.
 *
 * Client-side leak guard: any turn whose text carries raw API traffic
 * (`APICALL:` / `APIRESP:`) is dropped before it can reach the DOM. The
 * backend already filters these; this is the belt to its braces.
 */

import { TaskView, TurnView } from "./api.js";
import { Session, SessionSnapshot } from "./state.js";

export const LEAK_MARKERS = ["APICALL:", "APIRESP:"] as const;

export const SIDE_LABELS = { Left: "Assistant 1", Right: "Assistant 2" } as const;

export function turnIsClean(turn: TurnView): boolean {
  return !LEAK_MARKERS.some((marker) => turn.text.includes(marker));
}

export function render(root: HTMLElement, session: Session): void {
  renderSnapshot(root, session.snapshot(), session);
}

function renderSnapshot(
  root: HTMLElement,
  snap: SessionSnapshot,
  session: Session,
): void {
  root.textContent = "";
  switch (snap.phase) {
    case "loading":
      root.appendChild(el("p", "status", "Loading the next conversation pair…"));
      return;
    case "done":
      root.appendChild(el("p", "status done", "All done — thank you for annotating!"));
      return;
    case "error": {
      root.appendChild(el("p", "status error", snap.message));
      if (snap.pending > 0) {
        root.appendChild(
          el("p", "status", `${snap.pending} judgment(s) waiting to sync.`),
        );
      }
      const retry = el("button", "retry", "Retry") as HTMLButtonElement;
      retry.addEventListener("click", () => void session.retry());
      root.appendChild(retry);
      return;
    }
    case "task":
    case "submitting":
      if (snap.task !== null) {
        renderTask(root, snap, session);
      }
      return;
  }
}

function renderTask(
  root: HTMLElement,
  snap: SessionSnapshot,
  session: Session,
): void {
  const task = snap.task as TaskView;
  const busy = snap.phase === "submitting";

  root.appendChild(el("h2", "question", task.question));

  const pair = el("div", "pair");
  pair.appendChild(column(SIDE_LABELS.Left, task.left_turns));
  pair.appendChild(column(SIDE_LABELS.Right, task.right_turns));
  root.appendChild(pair);

  const form = el("div", "controls");
  const group = el("div", "choice-group");
  for (const side of ["Left", "Right"] as const) {
    const label = el("label", "choice");
    const radio = document.createElement("input");
    radio.type = "radio";
    radio.name = "choice";
    radio.value = side;
    radio.checked = snap.choice === side;
    radio.disabled = busy;
    radio.addEventListener("change", () => session.select(side));
    label.appendChild(radio);
    label.appendChild(
      document.createTextNode(` ${SIDE_LABELS[side]} (press ${side === "Left" ? "1" : "2"})`),
    );
    group.appendChild(label);
  }
  form.appendChild(group);

  const rationale = document.createElement("textarea");
  rationale.className = "rationale";
  rationale.placeholder = "Optional: why did you prefer this assistant?";
  rationale.value = snap.rationale;
  rationale.disabled = busy;
  rationale.addEventListener("input", () => session.setRationale(rationale.value));
  form.appendChild(rationale);

  const submit = el("button", "submit", busy ? "Submitting…" : "Submit") as HTMLButtonElement;
  submit.disabled = busy || snap.choice === null;
  submit.addEventListener("click", () => void session.submit());
  form.appendChild(submit);

  if (snap.message) {
    form.appendChild(el("p", "status error", snap.message));
  }
  root.appendChild(form);
}

function column(label: string, turns: TurnView[]): HTMLElement {
  const col = el("div", "column");
  col.appendChild(el("h3", "system-label", label));
  for (const turn of turns) {
    if (!turnIsClean(turn)) {
      continue; // leak guard: raw API traffic never reaches the DOM
    }
    const row = el("div", `turn ${turn.speaker === "User" ? "user" : "assistant"}`);
    row.appendChild(el("span", "speaker", turn.speaker));
    row.appendChild(el("span", "text", turn.text));
    col.appendChild(row);
  }
  return col;
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}
