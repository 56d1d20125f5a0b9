import type {
  Phase,
  QuestionInfo,
  Speaker,
  SummaryReply,
  Turn,
  TurnKind,
  TutorService,
} from "./api.js";
import { ServiceError } from "./api.js";

// Transcript turns become bubbles one-for-one; "summary" is the one
// client-side kind, appended after the server reports the session done.
export type BubbleKind = TurnKind | "summary";

export interface Bubble {
  speaker: Speaker;
  kind: BubbleKind;
  text: string;
}

export interface ChatViewState {
  sessionId: string | null;
  phase: Phase | null;
  bubbles: Bubble[];
  questions: QuestionInfo[];
  summary: SummaryReply | null;
  composing: string;
  /** True while a request is in flight; at most one per session. */
  busy: boolean;
  banner: string | null;
}

export function initialState(): ChatViewState {
  return {
    sessionId: null,
    phase: null,
    bubbles: [],
    questions: [],
    summary: null,
    composing: "",
    busy: false,
    banner: null,
  };
}

export function canSend(state: ChatViewState): boolean {
  return (
    state.sessionId !== null &&
    state.phase === "awaiting_answer" &&
    !state.busy &&
    state.composing.trim().length > 0
  );
}

function toBubble(turn: Turn): Bubble {
  return { speaker: turn.speaker, kind: turn.kind, text: turn.text };
}

function errorText(err: unknown): string {
  if (err instanceof ServiceError) return err.detail;
  return err instanceof Error ? err.message : String(err);
}

export class ChatController {
  state: ChatViewState = initialState();

  constructor(private service: TutorService) {}

  /** Create a session for a bundled document; first question arrives with it. */
  async startChat(docId: string, seed = 0): Promise<ChatViewState> {
    if (this.state.busy) return this.state;
    this.state.busy = true;
    this.state.banner = null;
    try {
      const created = await this.service.createSession({ doc_id: docId, seed });
      this.state.sessionId = created.session_id;
      this.state.phase = created.phase;
      this.state.bubbles = created.turns.map(toBubble);
      this.state.questions = created.questions;
    } catch (err) {
      // No session: leave the start panel up with an explanation.
      this.state.banner = errorText(err);
    } finally {
      this.state.busy = false;
    }
    return this.state;
  }

  /** Rehydrate an existing session from its transcript. */
  async reconnect(sessionId: string): Promise<ChatViewState> {
    if (this.state.busy) return this.state;
    this.state.busy = true;
    this.state.banner = null;
    try {
      const transcript = await this.service.getTranscript(sessionId);
      this.state.sessionId = transcript.session_id;
      this.state.phase = transcript.phase;
      this.state.bubbles = transcript.turns.map(toBubble);
      if (transcript.phase === "done") await this.loadSummary();
    } catch (err) {
      this.state.banner = errorText(err);
    } finally {
      this.state.busy = false;
    }
    return this.state;
  }

  setComposing(text: string): void {
    this.state.composing = text;
  }

  get sendEnabled(): boolean {
    return canSend(this.state);
  }

  /**
   * Post the draft as the patient's answer.  The reply carries every turn the
   * exchange appended (the echoed answer plus hint / reveal / question / end),
   * which keeps the bubble list a mirror of the server transcript.
   */
  async sendAnswer(): Promise<ChatViewState> {
    if (!canSend(this.state) || this.state.sessionId === null) {
      if (this.state.sessionId !== null && this.state.phase !== "awaiting_answer" && !this.state.busy) {
        this.state.banner = `Input is locked: the session is in '${this.state.phase}', not awaiting an answer.`;
      }
      return this.state;
    }
    const text = this.state.composing.trim();
    this.state.busy = true;
    this.state.banner = null;
    try {
      const reply = await this.service.sendMessage(this.state.sessionId, text);
      this.state.phase = reply.phase;
      for (const turn of reply.turns) this.state.bubbles.push(toBubble(turn));
      this.state.composing = "";
      if (reply.phase === "done") await this.loadSummary();
    } catch (err) {
      if (err instanceof ServiceError && err.status === 409) {
        this.state.banner = `Input is locked: ${err.detail}`;
      } else {
        this.state.banner = errorText(err);
      }
    } finally {
      this.state.busy = false;
    }
    return this.state;
  }

  private async loadSummary(): Promise<void> {
    if (this.state.sessionId === null) return;
    this.state.summary = await this.service.getSummary(this.state.sessionId);
    this.state.bubbles.push({ speaker: "tutor", kind: "summary", text: "Session summary" });
  }
}
