/** Typed client for the annotation service HTTP API.
 *
 * The server is the single source of pairing truth: the client never
 * constructs matchups, it only asks for the next pending pair and posts
 * the subject's choice.
 */

export interface PairInfo {
  left: string;
  right: string;
  meshUrlLeft: string;
  meshUrlRight: string;
}

export interface SessionCreated {
  session: string;
  round: number;
  pairings: [string, string][];
}

export type NextResponse =
  | { complete: true; scores: Record<string, number> }
  | { complete: false; round: number; rounds_total: number; pair: PairInfo };

export interface VoteAck {
  ok: boolean;
  remaining: number;
  round_complete: boolean;
  complete: boolean;
}

export interface GroupInfo {
  id: string;
  meshes: string[];
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
  /** Network-level failure (service unreachable), as opposed to an HTTP error. */
  get offline(): boolean {
    return this.status === 0;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  createSession(subject: string, group: string): Promise<SessionCreated> {
    return this.post<SessionCreated>("/api/sessions", { subject, group });
  }

  next(session: string): Promise<NextResponse> {
    return this.request<NextResponse>(`/api/sessions/${encodeURIComponent(session)}/next`);
  }

  vote(session: string, left: string, right: string, winner: string): Promise<VoteAck> {
    return this.post<VoteAck>(`/api/sessions/${encodeURIComponent(session)}/vote`, {
      left,
      right,
      winner,
    });
  }

  groups(): Promise<{ groups: GroupInfo[] }> {
    return this.request<{ groups: GroupInfo[] }>("/api/groups");
  }

  exportGroup(group: string): Promise<Record<string, unknown>> {
    return this.request<Record<string, unknown>>(`/api/export/${encodeURIComponent(group)}`);
  }

  meshUrl(path: string): string {
    return this.base + path;
  }

  async fetchMesh(path: string): Promise<ArrayBuffer> {
    let res: Response;
    try {
      res = await this.fetchFn(this.meshUrl(path));
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    if (!res.ok) throw new ApiError(res.status, `failed to load mesh ${path}`);
    return res.arrayBuffer();
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let res: Response;
    try {
      res = await this.fetchFn(this.base + path, init);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    if (!res.ok) {
      let detail = `HTTP ${res.status}`;
      try {
        const body = (await res.json()) as { detail?: unknown };
        if (typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }
}
