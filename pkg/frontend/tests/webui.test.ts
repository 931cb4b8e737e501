/**
 * Contract tests for the client pieces: goal panel rendering, ordering,
 * badges, stale sessions, and the one-request-at-a-time rule.
 */
import { beforeEach, describe, expect, it } from "vitest";
import { ServiceClient } from "../src/api.js";
import { App } from "../src/app.js";
import { UiStore } from "../src/state.js";
import { FakeService } from "./fake_service.js";

let fake: FakeService;
let root: HTMLElement;
let app: App;

beforeEach(() => {
  document.body.innerHTML = '<div id="app"></div>';
  root = document.getElementById("app")!;
  fake = new FakeService();
  globalThis.fetch = fake.fetch as typeof fetch;
  app = new App(root, new ServiceClient(""));
});

describe("goal panel", () => {
  it("renders one card per goal with label and preview chips", async () => {
    await app.loadGoals();
    const cards = [...root.querySelectorAll(".goal-card")];
    expect(cards).toHaveLength(3);
    expect(cards[0].querySelector(".goal-label")!.textContent).toBe("exploration");
    const chips = [...cards[0].querySelectorAll(".chip")].map((c) => c.textContent);
    expect(chips).toEqual(fake.goals[0].preview);
  });

  it("falls back to the goal id when the label is empty", async () => {
    await app.loadGoals();
    const card = root.querySelector('[data-goal="1"]')!;
    expect(card.querySelector(".goal-label")!.textContent).toBe("1");
  });
});

describe("session behavior", () => {
  it("renders recommendations sorted by probability, descending", async () => {
    await app.loadGoals();
    await app.selectGoal(0);
    await app.sendCommand("load_csv");
    const ps = [...root.querySelectorAll<HTMLButtonElement>("#recs .rec-row")].map((r) =>
      Number(r.dataset.p),
    );
    for (let i = 1; i < ps.length; i++) {
      expect(ps[i]).toBeLessThanOrEqual(ps[i - 1]);
    }
  });

  it("tags history entries as DC or SC based on the served vocabulary", async () => {
    await app.loadGoals();
    await app.selectGoal(0);
    await app.sendCommand("load_csv"); // in goal 0 preview: data command
    await app.sendCommand("open_settings"); // never served: software command
    const badges = [...root.querySelectorAll("#history .badge")].map((b) => b.textContent);
    expect(badges).toEqual(["DC", "SC"]);
  });

  it("returns to goal selection with a notice when the session is gone", async () => {
    await app.loadGoals();
    await app.selectGoal(1);
    fake.dropSessions();
    await app.sendCommand("pivot_table");
    expect(app.store.phase).toBe("SelectingGoal");
    const banner = root.querySelector(".banner-notice");
    expect(banner).not.toBeNull();
    expect(banner!.textContent).toContain("expired");
    expect(root.querySelectorAll(".goal-card")).toHaveLength(3);
  });

  it("keeps at most one request in flight", async () => {
    await app.loadGoals();
    await app.selectGoal(0);
    const served = fake.served.length;
    const a = app.sendCommand("load_csv");
    const b = app.sendCommand("filter_rows"); // coalesces into the first
    await Promise.all([a, b]);
    expect(fake.served.length).toBe(served + 1);
    expect(app.store.history).toEqual(["load_csv"]);
  });

  it("leaves the session cleanly via the change-goal button", async () => {
    await app.loadGoals();
    await app.selectGoal(2);
    (root.querySelector(".leave-session") as HTMLButtonElement).click();
    await app.whenIdle();
    expect(app.store.phase).toBe("SelectingGoal");
    expect(app.store.sessionId).toBeNull();
  });
});

describe("store", () => {
  it("classifies only served tokens as data commands", () => {
    const store = new UiStore();
    store.setGoals([{ goal: 0, label: "x", preview: ["load_csv"] }]);
    expect(store.kindOf("load_csv")).toBe("DC");
    expect(store.kindOf("click_button")).toBe("SC");
  });

  it("exposes the observed vocabulary for autocompletion", () => {
    const store = new UiStore();
    store.setGoals([{ goal: 0, label: "x", preview: ["b_cmd", "a_cmd"] }]);
    store.enterSession({ goal: 0, label: "x", preview: [] }, "s", [
      { cmd: "c_cmd", p: 0.5 },
    ]);
    expect(store.knownTokens()).toEqual(["a_cmd", "b_cmd", "c_cmd"]);
  });
});
