/**
 * Controller: owns the store and the view, talks to the service, and
 * keeps at most one request in flight so responses apply in order.
 */
import { ApiError, ServiceClient } from "./api.js";
import { UiStore } from "./state.js";
import { View, ViewHooks } from "./view.js";

export class App {
  readonly store: UiStore;
  private client: ServiceClient;
  private view: View;
  private current: Promise<void> | null = null;

  constructor(root: HTMLElement, client: ServiceClient) {
    this.client = client;
    this.store = new UiStore();
    const hooks: ViewHooks = {
      onRetry: () => void this.loadGoals(),
      onSelectGoal: (goal) => void this.selectGoal(goal),
      onSendCommand: (token) => void this.sendCommand(token),
      onLeaveSession: () => void this.leaveSession(),
    };
    this.view = new View(root, hooks);
    this.view.render(this.store);
  }

  /** Resolves once the in-flight request, if any, has been applied. */
  whenIdle(): Promise<void> {
    return this.current ?? Promise.resolve();
  }

  loadGoals(): Promise<void> {
    return this.run(async () => {
      try {
        this.store.setGoals(await this.client.getGoals());
      } catch (err) {
        this.store.loadFailed(describe(err, "could not load goals"));
      }
    });
  }

  selectGoal(goal: number): Promise<void> {
    return this.run(async () => {
      const info = this.store.goals.find((g) => g.goal === goal);
      if (!info) return;
      try {
        const resp = await this.client.startSession(goal);
        this.store.enterSession(info, resp.session, resp.recommendations);
      } catch (err) {
        this.store.showError(describe(err, "could not start session"));
      }
    });
  }

  sendCommand(token: string): Promise<void> {
    return this.run(async () => {
      const sid = this.store.sessionId;
      if (!sid) return;
      try {
        const resp = await this.client.sendCommand(sid, token);
        this.store.applyResponse(token, resp.recommendations);
      } catch (err) {
        if (err instanceof ApiError && (err.code === 404 || err.code === 410)) {
          this.store.sessionLost("session expired, pick a goal to start over");
        } else {
          this.store.showError(describe(err, "command failed"));
        }
      }
    });
  }

  leaveSession(): Promise<void> {
    return this.run(async () => {
      const sid = this.store.sessionId;
      this.store.leaveSession();
      if (sid) {
        // Courtesy cleanup; the UI has already moved on if it fails.
        await this.client.endSession(sid).catch(() => undefined);
      }
    });
  }

  private run(op: () => Promise<void>): Promise<void> {
    if (this.store.pending) return this.whenIdle();
    this.store.pending = true;
    this.view.render(this.store);
    const done = op().finally(() => {
      this.store.pending = false;
      this.current = null;
      this.view.render(this.store);
    });
    this.current = done;
    return done;
  }
}

function describe(err: unknown, fallback: string): string {
  if (err instanceof ApiError) {
    return err.code === 0 ? `service unreachable (${fallback})` : err.message;
  }
  return fallback;
}
