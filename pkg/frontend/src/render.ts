import type { SummaryReply } from "./api.js";
import type { Bubble, ChatViewState } from "./state.js";
import { canSend } from "./state.js";

// Display order and labels for the closing checklist, mirroring the
// service's seven checklist_answers slots.
export const CHECKLIST_SLOTS: ReadonlyArray<readonly [string, string]> = [
  ["medical_problem", "Medical problem"],
  ["medical_allergies", "Medical allergies"],
  ["good_exercises", "Good exercises"],
  ["diet", "Diet"],
  ["activities_to_avoid", "Activities to avoid"],
  ["next_appointment", "Next appointment"],
  ["points_not_understood", "Points not understood"],
];

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderBubble(doc: Document, bubble: Bubble, summary: SummaryReply | null): HTMLElement {
  // data-kind is the test hook; the kind-specific class carries the styling
  // that keeps question / hint / reveal visually distinct.
  const node = el(doc, "div", `bubble bubble-${bubble.kind}`);
  node.dataset.kind = bubble.kind;
  node.dataset.speaker = bubble.speaker;
  if (bubble.kind === "summary" && summary !== null) {
    node.appendChild(renderSummary(doc, summary));
  } else {
    node.textContent = bubble.text;
  }
  return node;
}

function renderSummary(doc: Document, reply: SummaryReply): HTMLElement {
  const section = el(doc, "section", "summary");
  section.appendChild(el(doc, "h2", undefined, "Before you go"));

  const checklist = el(doc, "ul", "checklist");
  for (const [slot, label] of CHECKLIST_SLOTS) {
    const item = el(doc, "li");
    item.dataset.slot = slot;
    item.appendChild(el(doc, "span", "slot-label", label));
    item.appendChild(el(doc, "span", "slot-answer", reply.summary.checklist_answers[slot] ?? ""));
    checklist.appendChild(item);
  }
  section.appendChild(checklist);

  const missedHeading = reply.summary.missed_points.length
    ? "Points to re-read"
    : "Nothing missed — well done";
  section.appendChild(el(doc, "h3", undefined, missedHeading));
  const missed = el(doc, "ul", "missed-points");
  for (const [questionId, note] of reply.summary.missed_points) {
    const item = el(doc, "li", undefined, note);
    item.dataset.question = questionId;
    missed.appendChild(item);
  }
  section.appendChild(missed);
  return section;
}

function renderComposer(doc: Document, state: ChatViewState): HTMLElement {
  const form = el(doc, "form", "composer");
  const input = el(doc, "input");
  input.type = "text";
  input.name = "draft";
  input.placeholder = "Type your answer…";
  input.value = state.composing;
  input.disabled = state.busy || state.phase !== "awaiting_answer";
  const button = el(doc, "button", undefined, state.busy ? "Sending…" : "Send");
  button.type = "submit";
  button.disabled = !canSend(state);
  form.appendChild(input);
  form.appendChild(button);
  return form;
}

function renderStartPanel(doc: Document, state: ChatViewState): HTMLElement {
  const form = el(doc, "form", "start-panel");
  const input = el(doc, "input");
  input.type = "text";
  input.name = "doc";
  input.placeholder = "Document id, e.g. di-001";
  const button = el(doc, "button", undefined, state.busy ? "Starting…" : "Start session");
  button.type = "submit";
  button.disabled = state.busy;
  form.appendChild(input);
  form.appendChild(button);
  return form;
}

export function render(state: ChatViewState, root: HTMLElement): void {
  const doc = root.ownerDocument;
  root.replaceChildren();

  if (state.banner !== null) {
    const banner = el(doc, "div", "banner", state.banner);
    banner.setAttribute("role", "alert");
    root.appendChild(banner);
  }

  if (state.sessionId === null) {
    root.appendChild(renderStartPanel(doc, state));
    return;
  }

  const log = el(doc, "div", "chat");
  for (const bubble of state.bubbles) {
    log.appendChild(renderBubble(doc, bubble, state.summary));
  }
  root.appendChild(log);
  root.appendChild(renderComposer(doc, state));
}
