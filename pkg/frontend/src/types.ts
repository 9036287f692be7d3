/** Wire types for the chat service JSON API plus client-side control state. */

export interface Candidate {
  text: string;
  d_score: number;
  log_prob: number;
  rank: number;
}

export interface TranscriptEntry {
  speaker: "human" | "model";
  text: string;
  rank: number | null;
  token_ids?: number[];
}

export interface SessionPayload {
  session_id: string;
  transcript: TranscriptEntry[];
  pending: Candidate[];
  created?: number;
  updated?: number;
}

export interface MessageResponse {
  session_id: string;
  candidates: Candidate[];
}

export interface Controls {
  alpha: number;
  numCandidates: number;
  autoCommit: boolean;
}

export const ALPHA_MIN = 1;
export const ALPHA_MAX = 20;
export const CANDIDATE_CHOICES = [1, 2, 4, 8, 16];

export function defaultControls(): Controls {
  return { alpha: 7, numCandidates: 8, autoCommit: false };
}

/** The surface the app needs from the HTTP client; mocked in tests. */
export interface Api {
  createSession(): Promise<{ id: string }>;
  sendMessage(
    id: string,
    text: string,
    alpha: number,
    numCandidates: number,
  ): Promise<MessageResponse>;
  commit(id: string, rank: number): Promise<{ session_id: string }>;
  getSession(id: string): Promise<SessionPayload>;
  deleteSession(id: string): Promise<{ deleted: string }>;
}
