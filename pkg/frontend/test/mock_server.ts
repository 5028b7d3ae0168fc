/** In-memory stand-in for the annotation service used by the UI tests.
 *
 * Implements the same HTTP contract (sessions, next, vote, export) over a
 * fetch-compatible function, with Swiss pairing by standings (wins desc,
 * id asc; adjacent pairing). Votes for pairs that are not currently
 * pending get a 409, matching the real service.
 */

import { FetchLike } from "../src/api.js";

type Pair = [string, string];

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export class MockServer {
  wins: Record<string, number> = {};
  pending: Pair[] = [];
  roundsCompleted = 0;
  votePosts = 0;
  sessionId = "mock-session-1";
  started = false;

  constructor(
    readonly participants: string[],
    readonly roundsTotal = 6,
    readonly group = "group0",
  ) {
    for (const p of participants) this.wins[p] = 0;
  }

  scores(): Record<string, number> {
    const out: Record<string, number> = {};
    for (const p of this.participants) out[p] = this.wins[p] / this.roundsTotal;
    return out;
  }

  private pairUp(): void {
    const ranked = [...this.participants].sort(
      (a, b) => this.wins[b] - this.wins[a] || (a < b ? -1 : 1),
    );
    this.pending = [];
    for (let i = 0; i + 1 < ranked.length; i += 2) {
      this.pending.push([ranked[i], ranked[i + 1]]);
    }
  }

  fetch: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : null;

    if (method === "POST" && url.endsWith("/api/sessions")) {
      if (body?.group !== this.group) return json({ detail: `unknown group ${body?.group}` }, 404);
      this.started = true;
      this.pairUp();
      return json({ session: this.sessionId, round: 1, pairings: this.pending });
    }

    if (method === "GET" && url.endsWith(`/api/sessions/${this.sessionId}/next`)) {
      if (this.roundsCompleted >= this.roundsTotal) {
        return json({ complete: true, scores: this.scores() });
      }
      if (this.pending.length === 0) this.pairUp();
      const [left, right] = this.pending[0];
      return json({
        complete: false,
        round: this.roundsCompleted + 1,
        rounds_total: this.roundsTotal,
        pair: {
          left,
          right,
          meshUrlLeft: `/meshes/${left}`,
          meshUrlRight: `/meshes/${right}`,
        },
      });
    }

    if (method === "POST" && url.endsWith(`/api/sessions/${this.sessionId}/vote`)) {
      this.votePosts += 1;
      const idx = this.pending.findIndex(
        ([l, r]) => l === body.left && r === body.right,
      );
      if (idx < 0) return json({ detail: "pair not pending" }, 409);
      if (body.winner !== body.left && body.winner !== body.right) {
        return json({ detail: "winner must be a member of the pair" }, 422);
      }
      this.pending.splice(idx, 1);
      this.wins[body.winner] += 1;
      if (this.pending.length === 0) this.roundsCompleted += 1;
      return json({
        ok: true,
        remaining: this.pending.length,
        round_complete: this.pending.length === 0,
        complete: this.roundsCompleted >= this.roundsTotal,
      });
    }

    if (method === "GET" && url.endsWith(`/api/export/${this.group}`)) {
      const meshes: Record<string, { score: number }> = {};
      for (const [m, s] of Object.entries(this.scores())) meshes[m] = { score: s };
      return json({ group: this.group, n_sessions: 1, meshes });
    }

    return json({ detail: `no route for ${method} ${url}` }, 404);
  };
}
