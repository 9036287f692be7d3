/** Thin fetch wrapper around the chat service endpoints. */

import type { Api, MessageResponse, SessionPayload } from "./types.js";

export class ApiError extends Error {
  /** status 0 means the server was unreachable. */
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export class ChatApi implements Api {
  private readonly fetchImpl: FetchLike;

  constructor(
    private readonly baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, `server unreachable: ${String(err)}`);
    }
    if (!resp.ok) {
      let detail = `request failed with status ${resp.status}`;
      try {
        const body: unknown = await resp.json();
        if (
          typeof body === "object" &&
          body !== null &&
          typeof (body as { detail?: unknown }).detail === "string"
        ) {
          detail = (body as { detail: string }).detail;
        }
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body?: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body ?? {}),
    });
  }

  createSession(): Promise<{ id: string }> {
    return this.post("/sessions");
  }

  sendMessage(
    id: string,
    text: string,
    alpha: number,
    numCandidates: number,
  ): Promise<MessageResponse> {
    return this.post(`/sessions/${id}/messages`, {
      text,
      alpha,
      L: numCandidates,
    });
  }

  commit(id: string, rank: number): Promise<{ session_id: string }> {
    return this.post(`/sessions/${id}/commit`, { rank });
  }

  getSession(id: string): Promise<SessionPayload> {
    return this.request(`/sessions/${id}`);
  }

  deleteSession(id: string): Promise<{ deleted: string }> {
    return this.request(`/sessions/${id}`, { method: "DELETE" });
  }
}
