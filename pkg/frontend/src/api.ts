// Types mirror the session service's JSON exactly (snake_case and all), so a
// payload can be used as-is without a mapping layer.

export type Phase = "questioning" | "awaiting_answer" | "summarizing" | "done";

export type Speaker = "tutor" | "patient";

export type TurnKind = "greeting" | "question" | "answer" | "hint" | "reveal" | "end";

export interface Turn {
  speaker: Speaker;
  text: string;
  turn_index: number;
  kind: TurnKind;
}

export interface QuestionInfo {
  id: string;
  category: string;
  text: string;
  verified: boolean;
  rejection_reason: string | null;
}

export interface CreateSessionRequest {
  doc_id?: string;
  instruction_text?: string;
  seed?: number;
}

export interface SessionCreated {
  session_id: string;
  doc_id: string;
  phase: Phase;
  turns: Turn[];
  questions: QuestionInfo[];
}

export interface MessageReply {
  session_id: string;
  phase: Phase;
  /** Only the turns appended by this exchange, in transcript order. */
  turns: Turn[];
}

export interface TranscriptReply {
  session_id: string;
  doc_id: string;
  phase: Phase;
  turns: Turn[];
}

export interface SessionSummary {
  keypoint_recap: [string, string][];
  missed_points: [string, string][];
  checklist_answers: Record<string, string>;
}

export interface SummaryReply {
  session_id: string;
  summary: SessionSummary;
  missed_question_ids: string[];
}

/** Error responses carry {error, detail}; detail is the human-readable part. */
export class ServiceError extends Error {
  readonly status: number;
  readonly detail: string;

  constructor(status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ServiceError";
    this.status = status;
    this.detail = detail;
  }
}

export interface TutorService {
  createSession(req: CreateSessionRequest): Promise<SessionCreated>;
  sendMessage(sessionId: string, text: string): Promise<MessageReply>;
  getTranscript(sessionId: string): Promise<TranscriptReply>;
  getSummary(sessionId: string): Promise<SummaryReply>;
}

export class HttpTutorService implements TutorService {
  constructor(private baseUrl: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const res = await fetch(this.baseUrl + path, init);
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const payload = await res.json();
        if (payload && typeof payload.detail === "string") detail = payload.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ServiceError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  createSession(req: CreateSessionRequest): Promise<SessionCreated> {
    return this.request("POST", "/sessions", req);
  }

  sendMessage(sessionId: string, text: string): Promise<MessageReply> {
    return this.request("POST", `/sessions/${encodeURIComponent(sessionId)}/messages`, { text });
  }

  getTranscript(sessionId: string): Promise<TranscriptReply> {
    return this.request("GET", `/sessions/${encodeURIComponent(sessionId)}/transcript`);
  }

  getSummary(sessionId: string): Promise<SummaryReply> {
    return this.request("GET", `/sessions/${encodeURIComponent(sessionId)}/summary`);
  }
}
