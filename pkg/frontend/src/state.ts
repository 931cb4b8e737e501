/**
 * Single-source UI state: every transition goes through one of the
 * mutator methods below, and the view is a pure function of this object.
 */
import { GoalInfo, Recommendation } from "./api.js";

export type Phase = "SelectingGoal" | "InSession";

export type CommandKind = "DC" | "SC";

export interface Banner {
  text: string;
  kind: "error" | "notice";
  retryable: boolean;
}

export class UiStore {
  phase: Phase = "SelectingGoal";
  goals: GoalInfo[] = [];
  sessionId: string | null = null;
  activeGoal: GoalInfo | null = null;
  /** Commands sent this session, oldest first; append-only. */
  history: string[] = [];
  recommendations: Recommendation[] = [];
  banner: Banner | null = null;
  /** A request is in flight; the view disables inputs while set. */
  pending = false;

  // Tokens the service has served as data commands (goal previews and
  // recommendation lists are data-command-only). Badges derive from this,
  // so a token never served as a data command renders as software.
  private dataCommands = new Set<string>();

  setGoals(goals: GoalInfo[]): void {
    this.goals = goals;
    this.banner = null;
    for (const g of goals) {
      for (const token of g.preview) this.dataCommands.add(token);
    }
  }

  loadFailed(message: string): void {
    this.goals = [];
    this.banner = { text: message, kind: "error", retryable: true };
  }

  enterSession(goal: GoalInfo, sessionId: string, recs: Recommendation[]): void {
    this.phase = "InSession";
    this.activeGoal = goal;
    this.sessionId = sessionId;
    this.history = [];
    this.banner = null;
    this.setRecommendations(recs);
  }

  /** Apply one accepted command: history grows, panel is replaced. */
  applyResponse(token: string, recs: Recommendation[]): void {
    this.history.push(token);
    this.banner = null;
    this.setRecommendations(recs);
  }

  /** Session is gone on the service side; back to goal selection. */
  sessionLost(notice: string): void {
    this.leaveSession();
    this.banner = { text: notice, kind: "notice", retryable: false };
  }

  leaveSession(): void {
    this.phase = "SelectingGoal";
    this.sessionId = null;
    this.activeGoal = null;
    this.history = [];
    this.recommendations = [];
    this.banner = null;
  }

  showError(message: string): void {
    this.banner = { text: message, kind: "error", retryable: false };
  }

  kindOf(token: string): CommandKind {
    return this.dataCommands.has(token) ? "DC" : "SC";
  }

  /** Autocomplete pool: everything observed over the wire plus past input. */
  knownTokens(): string[] {
    const pool = new Set<string>(this.dataCommands);
    for (const token of this.history) pool.add(token);
    return [...pool].sort();
  }

  private setRecommendations(recs: Recommendation[]): void {
    for (const r of recs) this.dataCommands.add(r.cmd);
    // Service sends them ordered already; a stable re-sort keeps the
    // descending-probability contract without reordering ties.
    this.recommendations = [...recs].sort((a, b) => b.p - a.p);
  }
}
