/** Session state machine for one annotator's tournament.
 *
 * All pairing decisions come from the server; this model only tracks the
 * currently displayed pair, posts choices, and mirrors server state. At
 * most one vote is in flight at a time — rapid double-clicks collapse to
 * a single recorded vote.
 */

import { ApiClient, ApiError, PairInfo } from "./api.js";

export type SessionPhase = "idle" | "starting" | "loading" | "voting" | "complete" | "error";

export type Side = "left" | "right";

export class SessionViewModel {
  phase: SessionPhase = "idle";
  sessionId: string | null = null;
  round = 0;
  roundsTotal = 0;
  pair: PairInfo | null = null;
  votesCast = 0;
  scores: Record<string, number> | null = null;
  errorMessage: string | null = null;

  private voteInFlight = false;
  private readonly listeners: Array<() => void> = [];

  constructor(private readonly api: ApiClient) {}

  onChange(fn: () => void): void {
    this.listeners.push(fn);
  }

  /** True when the subject may cast a vote right now. */
  get canVote(): boolean {
    return this.phase === "voting" && this.pair !== null && !this.voteInFlight;
  }

  get busy(): boolean {
    return this.voteInFlight;
  }

  async start(subject: string, group: string): Promise<void> {
    this.phase = "starting";
    this.errorMessage = null;
    this.notify();
    try {
      const res = await this.api.createSession(subject, group);
      this.sessionId = res.session;
    } catch (err) {
      // failed before any server-side session existed: no state mutation
      this.sessionId = null;
      this.fail(err);
      return;
    }
    await this.refresh();
  }

  /** Reload mid-session: the server is authoritative, just re-sync. */
  async resume(sessionId: string): Promise<void> {
    this.sessionId = sessionId;
    await this.refresh();
  }

  async refresh(): Promise<void> {
    if (this.sessionId === null) throw new Error("no active session");
    if (this.pair === null) {
      this.phase = "loading";
      this.notify();
    }
    try {
      const res = await this.api.next(this.sessionId);
      if (res.complete) {
        this.phase = "complete";
        this.scores = res.scores;
        this.pair = null;
      } else {
        this.phase = "voting";
        this.round = res.round;
        this.roundsTotal = res.rounds_total;
        this.pair = res.pair;
      }
      this.errorMessage = null;
    } catch (err) {
      this.fail(err);
      return;
    }
    this.notify();
  }

  /**
   * Post the subject's choice for the displayed pair. Returns true iff the
   * vote was recorded. Ignored (false) while another vote is in flight or
   * no pair is displayed. A 409 means the pair went stale — re-sync without
   * recording; other failures surface in `errorMessage` with the pair kept
   * on screen so the subject can retry.
   */
  async vote(choice: Side): Promise<boolean> {
    if (!this.canVote || this.pair === null || this.sessionId === null) return false;
    const pair = this.pair;
    const winner = choice === "left" ? pair.left : pair.right;
    this.voteInFlight = true;
    this.notify();
    try {
      await this.api.vote(this.sessionId, pair.left, pair.right, winner);
      this.votesCast += 1;
    } catch (err) {
      this.voteInFlight = false;
      if (err instanceof ApiError && err.status === 409) {
        await this.refresh();
        return false;
      }
      this.errorMessage = err instanceof Error ? err.message : String(err);
      this.notify();
      return false;
    }
    this.voteInFlight = false;
    await this.refresh();
    return true;
  }

  private fail(err: unknown): void {
    this.phase = "error";
    this.errorMessage = err instanceof Error ? err.message : String(err);
    this.notify();
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }
}
