/**
 * DOM renderer. Stateless full redraw: render(store) rebuilds the page
 * from UiStore alone, so what is on screen is exactly what the store holds.
 */
import { Recommendation } from "./api.js";
import { UiStore } from "./state.js";

export interface ViewHooks {
  onRetry(): void;
  onSelectGoal(goal: number): void;
  onSendCommand(token: string): void;
  onLeaveSession(): void;
}

const VOCAB_LIST_ID = "vocab-options";

export class View {
  private root: HTMLElement;
  private hooks: ViewHooks;

  constructor(root: HTMLElement, hooks: ViewHooks) {
    this.root = root;
    this.hooks = hooks;
  }

  render(store: UiStore): void {
    this.root.textContent = "";
    if (store.banner) {
      this.root.appendChild(this.renderBanner(store));
    }
    if (store.phase === "SelectingGoal") {
      this.root.appendChild(this.renderGoalPanel(store));
    } else {
      this.root.appendChild(this.renderSessionPanel(store));
    }
  }

  private renderBanner(store: UiStore): HTMLElement {
    const banner = el("div", `banner banner-${store.banner!.kind}`);
    const text = el("span", "banner-text");
    text.textContent = store.banner!.text;
    banner.appendChild(text);
    if (store.banner!.retryable) {
      const retry = el("button", "banner-retry") as HTMLButtonElement;
      retry.type = "button";
      retry.textContent = "Retry";
      retry.addEventListener("click", () => this.hooks.onRetry());
      banner.appendChild(retry);
    }
    return banner;
  }

  private renderGoalPanel(store: UiStore): HTMLElement {
    const panel = el("section", "goal-panel");
    const heading = el("h1");
    heading.textContent = "Pick a goal";
    panel.appendChild(heading);
    const grid = el("div", "goal-grid");
    for (const g of store.goals) {
      const card = el("button", "goal-card") as HTMLButtonElement;
      card.type = "button";
      card.dataset.goal = String(g.goal);
      card.disabled = store.pending;
      const label = el("div", "goal-label");
      label.textContent = g.label || String(g.goal);
      card.appendChild(label);
      const preview = el("div", "goal-preview");
      for (const token of g.preview) {
        const chip = el("span", "chip");
        chip.textContent = token;
        preview.appendChild(chip);
      }
      card.appendChild(preview);
      card.addEventListener("click", () => this.hooks.onSelectGoal(g.goal));
      grid.appendChild(card);
    }
    panel.appendChild(grid);
    return panel;
  }

  private renderSessionPanel(store: UiStore): HTMLElement {
    const panel = el("section", "session-panel");
    const header = el("header", "session-header");
    const title = el("h1");
    const g = store.activeGoal!;
    title.textContent = `Goal: ${g.label || String(g.goal)}`;
    header.appendChild(title);
    const leave = el("button", "leave-session") as HTMLButtonElement;
    leave.type = "button";
    leave.textContent = "Change goal";
    leave.disabled = store.pending;
    leave.addEventListener("click", () => this.hooks.onLeaveSession());
    header.appendChild(leave);
    panel.appendChild(header);

    panel.appendChild(this.renderHistory(store));
    panel.appendChild(this.renderRecommendations(store));
    panel.appendChild(this.renderEntry(store));
    return panel;
  }

  private renderHistory(store: UiStore): HTMLElement {
    const box = el("div", "history");
    const heading = el("h2");
    heading.textContent = "History";
    box.appendChild(heading);
    const list = el("ul", "history-list");
    list.id = "history";
    for (const token of store.history) {
      const item = el("li", "history-item");
      const kind = store.kindOf(token);
      const badge = el("span", `badge badge-${kind.toLowerCase()}`);
      badge.textContent = kind;
      item.appendChild(badge);
      const text = el("span", "history-token");
      text.textContent = token;
      item.appendChild(text);
      list.appendChild(item);
    }
    box.appendChild(list);
    return box;
  }

  private renderRecommendations(store: UiStore): HTMLElement {
    const box = el("div", "recs");
    const heading = el("h2");
    heading.textContent = "Recommended next data commands";
    box.appendChild(heading);
    const list = el("ol", "rec-list");
    list.id = "recs";
    for (const rec of store.recommendations) {
      list.appendChild(this.renderRec(rec, store.pending));
    }
    box.appendChild(list);
    return box;
  }

  private renderRec(rec: Recommendation, pending: boolean): HTMLElement {
    const item = el("li", "rec-item");
    const row = el("button", "rec-row") as HTMLButtonElement;
    row.type = "button";
    row.disabled = pending;
    // Raw response values ride along so the rendered list can be compared
    // with the service payload without any display rounding in the way.
    row.dataset.cmd = rec.cmd;
    row.dataset.p = String(rec.p);
    const cmd = el("span", "rec-cmd");
    cmd.textContent = rec.cmd;
    row.appendChild(cmd);
    const bar = el("div", "rec-bar");
    const fill = el("div", "rec-fill");
    fill.style.width = `${Math.max(0, Math.min(1, rec.p)) * 100}%`;
    bar.appendChild(fill);
    row.appendChild(bar);
    const prob = el("span", "rec-p");
    prob.textContent = rec.p.toFixed(3);
    row.appendChild(prob);
    row.addEventListener("click", () => this.hooks.onSendCommand(rec.cmd));
    item.appendChild(row);
    return item;
  }

  private renderEntry(store: UiStore): HTMLElement {
    const form = el("form", "entry") as HTMLFormElement;
    const input = el("input", "entry-input") as HTMLInputElement;
    input.id = "cmd-input";
    input.type = "text";
    input.placeholder = "type a command";
    input.autocomplete = "off";
    input.setAttribute("list", VOCAB_LIST_ID);
    input.disabled = store.pending;
    form.appendChild(input);
    const datalist = el("datalist") as HTMLDataListElement;
    datalist.id = VOCAB_LIST_ID;
    for (const token of store.knownTokens()) {
      const option = el("option") as HTMLOptionElement;
      option.value = token;
      datalist.appendChild(option);
    }
    form.appendChild(datalist);
    const send = el("button", "entry-send") as HTMLButtonElement;
    send.type = "submit";
    send.textContent = "Send";
    send.disabled = store.pending;
    form.appendChild(send);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const token = input.value.trim();
      if (token) this.hooks.onSendCommand(token);
    });
    return form;
  }
}

function el(tag: string, className?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  return node;
}
