/**
 * In-memory stand-in for the recommendation service, speaking the same
 * four endpoints over a fetch-compatible function. Responses are
 * deterministic so tests can pin exact payloads; every served body is
 * recorded for byte-level comparison against the rendered page.
 */

interface FakeSessionState {
  goal: number;
  window: string[];
}

/** Data commands per goal; previews and recommendations draw from these. */
const GOAL_POOLS: string[][] = [
  ["load_csv", "filter_rows", "group_by", "plot_hist", "join_tables"],
  ["pivot_table", "sort_values", "drop_nulls", "sample_rows", "describe_stats"],
  ["export_csv", "merge_frames", "rename_cols", "cast_types", "window_agg"],
];

// Probability ladder with enough decimals that display rounding would be
// caught by a byte-level comparison.
const LADDER = [0.412937, 0.273184, 0.165092, 0.091337, 0.05745];

export class FakeService {
  goals = [
    { goal: 0, label: "exploration", preview: GOAL_POOLS[0].slice(0, 5) },
    { goal: 1, label: "", preview: GOAL_POOLS[1].slice(0, 5) },
    { goal: 2, label: "reporting", preview: GOAL_POOLS[2].slice(0, 5) },
  ];
  /** When set, fetch rejects as if the network were down. */
  down = false;
  /** Raw JSON bodies served, in order. */
  served: string[] = [];

  private sessions = new Map<string, FakeSessionState>();
  private counter = 0;

  readonly fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    if (this.down) throw new TypeError("fetch failed");
    const url = typeof input === "string" ? input : input instanceof URL ? input.href : input.url;
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    return this.route(method, path, body);
  };

  lastBody(): string {
    if (this.served.length === 0) throw new Error("nothing served yet");
    return this.served[this.served.length - 1];
  }

  dropSessions(): void {
    this.sessions.clear();
  }

  private route(method: string, path: string, body: unknown): Response {
    if (method === "GET" && path === "/goals") {
      return this.ok(this.goals);
    }
    if (method === "POST" && path === "/sessions") {
      const goal = (body as { goal?: number })?.goal;
      if (typeof goal !== "number" || !this.goals.some((g) => g.goal === goal)) {
        return this.fail(404, `unknown goal id: ${goal}`);
      }
      const sid = (++this.counter).toString(16).padStart(32, "0");
      this.sessions.set(sid, { goal, window: [] });
      return this.ok({ session: sid, recommendations: this.recommend(goal, 0) });
    }
    const cmdMatch = path.match(/^\/sessions\/([0-9a-f]{32})\/commands$/);
    if (method === "POST" && cmdMatch) {
      const session = this.sessions.get(cmdMatch[1]);
      if (!session) return this.fail(404, `unknown session id: ${cmdMatch[1]}`);
      const cmd = (body as { cmd?: string })?.cmd;
      if (typeof cmd !== "string" || !cmd) return this.fail(400, "cmd must be a non-empty string");
      session.window.push(cmd);
      return this.ok({
        recommendations: this.recommend(session.goal, session.window.length),
        window_len: Math.min(session.window.length, 10),
      });
    }
    const delMatch = path.match(/^\/sessions\/([0-9a-f]{32})$/);
    if (method === "DELETE" && delMatch) {
      if (!this.sessions.delete(delMatch[1])) {
        return this.fail(404, `unknown session id: ${delMatch[1]}`);
      }
      return this.ok({ deleted: delMatch[1] });
    }
    return this.fail(404, "not found");
  }

  /** Rotate the pool against a fixed descending ladder; deterministic per step. */
  private recommend(goal: number, step: number): { cmd: string; p: number }[] {
    const pool = GOAL_POOLS[goal];
    return LADDER.map((p, i) => ({ cmd: pool[(i + step) % pool.length], p }));
  }

  private ok(payload: unknown): Response {
    const text = JSON.stringify(payload);
    this.served.push(text);
    return new Response(text, {
      status: 200,
      headers: { "Content-Type": "application/json; charset=utf-8" },
    });
  }

  private fail(code: number, error: string): Response {
    return new Response(JSON.stringify({ error, code }), {
      status: code,
      headers: { "Content-Type": "application/json; charset=utf-8" },
    });
  }
}
