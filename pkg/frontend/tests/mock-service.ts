import type {
  CreateSessionRequest,
  MessageReply,
  Phase,
  SessionCreated,
  SummaryReply,
  TranscriptReply,
  Turn,
  TutorService,
} from "../src/api.js";
import { ServiceError } from "../src/api.js";

// In-memory stand-in for the session service, speaking the same turn grammar:
// greeting + first question on create; wrong answer -> hint; second wrong ->
// reveal + next question; correct -> acknowledgement merged into the next
// question; end turn when the list runs out; summary only once done.

export interface ScriptedQuestion {
  id: string;
  category: string;
  text: string;
  /** The patient reply the mock grades as correct (case-insensitive). */
  answer: string;
  hint: string;
  /** Quoted verbatim in the reveal turn after a second miss. */
  evidence: string;
}

interface MockSession {
  id: string;
  docId: string;
  phase: Phase;
  turns: Turn[];
  queue: ScriptedQuestion[];
  active: ScriptedQuestion | null;
  hinted: boolean;
  missed: ScriptedQuestion[];
}

const CHECKLIST_FILL: Record<string, string> = {
  medical_problem: "Recovering after a hospital stay; follow the written plan.",
  medical_allergies: "not applicable",
  good_exercises: "Short walks as tolerated.",
  diet: "Regular diet unless the instructions say otherwise.",
  activities_to_avoid: "Anything the instructions flag until cleared.",
  next_appointment: "Listed on the instruction sheet.",
  points_not_understood: "See the re-read list below.",
};

export class MockTutorService implements TutorService {
  private sessions = new Map<string, MockSession>();
  private counter = 0;

  constructor(private docs: Record<string, ScriptedQuestion[]>) {}

  async createSession(req: CreateSessionRequest): Promise<SessionCreated> {
    const docId = req.doc_id;
    if (!docId || !(docId in this.docs)) {
      throw new ServiceError(404, `unknown document: ${docId ?? "(none)"}`);
    }
    const script = this.docs[docId];
    const session: MockSession = {
      id: `m${++this.counter}`,
      docId,
      phase: "awaiting_answer",
      turns: [],
      queue: [...script],
      active: null,
      hinted: false,
      missed: [],
    };
    this.push(session, "tutor", "greeting",
      "Hi! Let's go over your discharge instructions together.");
    this.advance(session, "");
    this.sessions.set(session.id, session);
    return {
      session_id: session.id,
      doc_id: docId,
      phase: session.phase,
      turns: [...session.turns],
      questions: script.map((q) => ({
        id: q.id,
        category: q.category,
        text: q.text,
        verified: true,
        rejection_reason: null,
      })),
    };
  }

  async sendMessage(sessionId: string, text: string): Promise<MessageReply> {
    const session = this.get(sessionId);
    if (session.phase !== "awaiting_answer") {
      throw new ServiceError(409,
        `message requires phase 'awaiting_answer', session is in '${session.phase}'`);
    }
    const before = session.turns.length;
    this.push(session, "patient", "answer", text);
    const question = session.active;
    if (question === null) throw new ServiceError(500, "no active question");

    if (text.trim().toLowerCase() === question.answer.toLowerCase()) {
      this.advance(session, "That's right. ");
    } else if (!session.hinted) {
      session.hinted = true;
      this.push(session, "tutor", "hint", question.hint);
    } else {
      session.missed.push(question);
      this.push(session, "tutor", "reveal",
        `Your instructions say: "${question.evidence}"`);
      this.advance(session, "Let's move on. ");
    }
    return {
      session_id: sessionId,
      phase: session.phase,
      turns: session.turns.slice(before),
    };
  }

  async getTranscript(sessionId: string): Promise<TranscriptReply> {
    const session = this.get(sessionId);
    return {
      session_id: sessionId,
      doc_id: session.docId,
      phase: session.phase,
      turns: [...session.turns],
    };
  }

  async getSummary(sessionId: string): Promise<SummaryReply> {
    const session = this.get(sessionId);
    if (session.phase !== "done") {
      throw new ServiceError(409,
        `summary requires phase 'done', session is in '${session.phase}'`);
    }
    return {
      session_id: sessionId,
      summary: {
        keypoint_recap: this.docs[session.docId].map((q) => [q.category, q.evidence]),
        missed_points: session.missed.map((q) => [q.id, q.text]),
        checklist_answers: { ...CHECKLIST_FILL },
      },
      missed_question_ids: session.missed.map((q) => q.id),
    };
  }

  private get(sessionId: string): MockSession {
    const session = this.sessions.get(sessionId);
    if (!session) throw new ServiceError(404, `unknown session: ${sessionId}`);
    return session;
  }

  private push(session: MockSession, speaker: Turn["speaker"], kind: Turn["kind"], text: string): void {
    session.turns.push({ speaker, kind, text, turn_index: session.turns.length });
  }

  private advance(session: MockSession, ack: string): void {
    session.active = session.queue.shift() ?? null;
    session.hinted = false;
    if (session.active !== null) {
      this.push(session, "tutor", "question", ack + session.active.text);
      session.phase = "awaiting_answer";
    } else {
      this.push(session, "tutor", "end",
        "That's everything — thanks for going through it with me. Take care!");
      session.phase = "done";
    }
  }
}

export function scriptedQuestion(n: number): ScriptedQuestion {
  return {
    id: `q${n}`,
    category: ["medication", "test", "complications_progress", "follow_up"][n % 4],
    text: `Scripted check number ${n}: what does item ${n} of your instructions ask you to do?`,
    answer: `Item ${n} says to follow step ${n} exactly as written.`,
    hint: `Look back at the part of the sheet covering item ${n}.`,
    evidence: `Item ${n}: follow step ${n} exactly as written, every day.`,
  };
}

export function scriptedDoc(count: number): ScriptedQuestion[] {
  return Array.from({ length: count }, (_, i) => scriptedQuestion(i + 1));
}
