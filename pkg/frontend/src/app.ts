/** Chat console state machine wired to the session API.
 *
 * One in-flight request per session: the send path is disabled while busy.
 * After every committing action the transcript is re-fetched so the render
 * always mirrors the server. Candidates stay visible (greyed) after an
 * auto-commit so the rejected alternatives remain inspectable.
 */

import { ApiError } from "./api.js";
import type { Api, Candidate, Controls, TranscriptEntry } from "./types.js";
import { defaultControls } from "./types.js";
import {
  renderCandidates,
  renderControls,
  renderError,
  renderTranscript,
} from "./view.js";

interface Elements {
  error: HTMLElement;
  transcript: HTMLElement;
  candidates: HTMLElement;
  controls: HTMLElement;
  input: HTMLInputElement;
  send: HTMLButtonElement;
  session: HTMLElement;
}

export class ChatApp {
  sessionId: string | null = null;
  controls: Controls = defaultControls();
  transcript: TranscriptEntry[] = [];
  candidates: Candidate[] = [];
  committedRank: number | null = null;
  busy = false;
  errorMessage: string | null = null;
  private unreachable = false;
  private readonly els: Elements;

  constructor(
    private readonly api: Api,
    private readonly root: HTMLElement,
  ) {
    this.els = this.buildSkeleton();
    this.render();
  }

  private buildSkeleton(): Elements {
    const doc = this.root.ownerDocument;
    const make = (tag: string, testid: string, className: string) => {
      const node = doc.createElement(tag);
      node.className = className;
      (node as HTMLElement).dataset.testid = testid;
      this.root.append(node);
      return node as HTMLElement;
    };
    const session = make("div", "session-id", "session-id");
    const error = make("div", "error-banner", "error-banner hidden");
    const transcript = make("div", "transcript", "transcript");
    const candidates = make("div", "candidates", "candidates");
    const controls = make("div", "controls", "controls");

    const form = doc.createElement("form");
    form.className = "composer";
    const input = doc.createElement("input");
    input.type = "text";
    input.placeholder = "say something";
    input.dataset.testid = "composer-input";
    const send = doc.createElement("button");
    send.type = "submit";
    send.textContent = "send";
    send.dataset.testid = "send-button";
    form.append(input, send);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.send();
    });
    this.root.append(form);
    return { error, transcript, candidates, controls, input, send, session };
  }

  /** Create a session, or reattach to an existing one (page reload). */
  async start(existingId?: string): Promise<void> {
    try {
      if (existingId) {
        try {
          const payload = await this.api.getSession(existingId);
          this.sessionId = existingId;
          this.transcript = payload.transcript;
          this.candidates = payload.pending;
          this.committedRank = null;
          this.setError(null);
          this.render();
          return;
        } catch (err) {
          if (!(err instanceof ApiError) || err.status === 0) throw err;
          // stale or evicted id: fall through to a fresh session
        }
      }
      const { id } = await this.api.createSession();
      this.sessionId = id;
      this.transcript = [];
      this.candidates = [];
      this.committedRank = null;
      this.setError(null);
    } catch (err) {
      this.unreachable = true;
      this.setError(this.describe(err));
    }
    this.render();
  }

  async send(): Promise<void> {
    const text = this.els.input.value.trim();
    if (this.busy || !this.sessionId || !text) return;
    this.busy = true;
    this.render();
    try {
      const resp = await this.api.sendMessage(
        this.sessionId,
        text,
        this.controls.alpha,
        this.controls.numCandidates,
      );
      this.els.input.value = "";
      this.candidates = resp.candidates;
      this.committedRank = null;
      if (this.controls.autoCommit && resp.candidates.length > 0) {
        await this.api.commit(this.sessionId, 0);
        this.committedRank = 0;
      }
      await this.refreshTranscript();
      this.setError(null);
    } catch (err) {
      // input is left as typed so the user can retry
      this.setError(this.describe(err));
    } finally {
      this.busy = false;
      this.render();
    }
  }

  async pick(rank: number): Promise<void> {
    if (this.busy || !this.sessionId || this.committedRank !== null) return;
    this.busy = true;
    this.render();
    try {
      await this.api.commit(this.sessionId, rank);
      this.candidates = [];
      this.committedRank = null;
      await this.refreshTranscript();
      this.setError(null);
    } catch (err) {
      if (err instanceof ApiError && err.status !== 0) {
        // stale pick (evicted session, already-committed list): resync
        await this.refreshTranscript().catch(() => undefined);
      }
      this.setError(this.describe(err));
    } finally {
      this.busy = false;
      this.render();
    }
  }

  private async refreshTranscript(): Promise<void> {
    if (!this.sessionId) return;
    const payload = await this.api.getSession(this.sessionId);
    this.transcript = payload.transcript;
    if (payload.pending.length > 0) {
      this.candidates = payload.pending;
      this.committedRank = null;
    } else if (this.committedRank === null) {
      this.candidates = [];
    }
  }

  private setError(message: string | null): void {
    this.errorMessage = message;
    if (message === null) this.unreachable = false;
  }

  private describe(err: unknown): string {
    if (err instanceof ApiError) {
      return err.status === 0 ? err.message : `(${err.status}) ${err.message}`;
    }
    return String(err);
  }

  render(): void {
    this.els.session.textContent = this.sessionId
      ? `session ${this.sessionId}`
      : "no session";
    renderError(
      this.els.error,
      this.errorMessage,
      this.unreachable ? () => void this.start() : null,
    );
    renderTranscript(this.els.transcript, this.transcript);
    renderCandidates(this.els.candidates, {
      candidates: this.candidates,
      committedRank: this.committedRank,
      busy: this.busy,
      onPick: (rank) => void this.pick(rank),
    });
    renderControls(this.els.controls, {
      controls: this.controls,
      onChange: (next) => {
        this.controls = next;
        this.render();
      },
    });
    this.els.send.disabled = this.busy || this.sessionId === null;
    this.els.input.disabled = this.busy || this.sessionId === null;
  }
}
