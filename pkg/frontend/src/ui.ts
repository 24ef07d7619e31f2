/** DOM rendering for the context explorer; no framework, direct writes. */

import type { ExplorerStore, State } from "./store.js";
import type { Card, ContextSchema, FactorPayload } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

/** Chip text is the server factor verbatim; the full payload rides along. */
export function factorChip(factor: FactorPayload): HTMLElement {
  const chip = el("span", { class: "chip", title: `p=${factor.p}` });
  chip.textContent = `${factor.dimension}=${factor.value}`;
  chip.dataset.factor = JSON.stringify(factor);
  return chip;
}

function cardNode(card: Card, store: ExplorerStore): HTMLElement {
  const root = el("article", { class: `card action-${card.action}`, "data-app": card.app });
  const head = el("header");
  head.append(
    el("span", { class: "rank" }, `#${card.rank}`),
    el("strong", { class: "name" }, card.name),
    el("span", { class: "category" }, card.category),
    el("span", { class: "score" }, card.score.toFixed(3)),
  );
  root.append(head);
  const explanation = el("p", { class: "explanation" });
  explanation.textContent = card.explanation;
  root.append(explanation);
  const chips = el("div", { class: "chips" });
  for (const factor of card.factors) chips.append(factorChip(factor));
  root.append(chips);

  const actions = el("div", { class: "actions" });
  const mk = (label: string, kind: "viewed" | "installed" | "skipped") => {
    const button = el("button", { "data-kind": kind }, label);
    if (card.action === kind) button.setAttribute("disabled", "disabled");
    button.addEventListener("click", () => void store.act(card.app, kind));
    return button;
  };
  actions.append(mk("view", "viewed"), mk("install", "installed"), mk("skip", "skipped"));
  if (card.action !== "none") {
    actions.append(el("span", { class: "state" }, card.action));
  }
  root.append(actions);
  return root;
}

export function renderControls(
  container: HTMLElement,
  schema: ContextSchema,
  store: ExplorerStore,
): void {
  container.replaceChildren();
  const userRow = el("div", { class: "control" });
  userRow.append(el("label", {}, "user"));
  const userInput = el("input", { type: "text", value: store.state.user, id: "user-input" });
  userInput.addEventListener("change", () => store.setUser(userInput.value));
  userRow.append(userInput);
  container.append(userRow);

  const nRow = el("div", { class: "control" });
  nRow.append(el("label", {}, "top N"));
  const nInput = el("input", { type: "number", min: "1", max: "50", value: String(store.state.n) });
  nInput.addEventListener("change", () => store.setN(Number(nInput.value) || 21));
  nRow.append(nInput);
  container.append(nRow);

  for (const dim of schema.dimensions) {
    const row = el("div", { class: "control" });
    row.append(el("label", {}, dim.name));
    const select = el("select", { "data-dimension": dim.name });
    for (const value of dim.values) {
      const opt = el("option", { value }, value);
      if (value === store.state.selection[dim.name]) opt.setAttribute("selected", "selected");
      select.append(opt);
    }
    select.addEventListener("change", () => store.setDimension(dim.name, select.value));
    row.append(select);
    container.append(row);
  }

  const toggles = el("div", { class: "control toggles" });
  const exclude = el("input", { type: "checkbox", id: "exclude-toggle" });
  exclude.checked = store.state.excludeInstalled;
  exclude.addEventListener("change", () => store.setExcludeInstalled(exclude.checked));
  const excludeLabel = el("label", { for: "exclude-toggle" }, "hide installed");
  const compare = el("input", { type: "checkbox", id: "compare-toggle" });
  compare.checked = store.state.compare;
  compare.addEventListener("change", () => store.setCompare(compare.checked));
  const compareLabel = el("label", { for: "compare-toggle" }, "compare vs no-context");
  toggles.append(exclude, excludeLabel, compare, compareLabel);
  container.append(toggles);
}

export function renderState(root: HTMLElement, state: State, store: ExplorerStore): void {
  const banner = root.querySelector("#banner") as HTMLElement;
  banner.replaceChildren();
  if (state.error) {
    banner.append(el("div", { class: "error" }, `request failed: ${state.error} (showing last results)`));
  }
  if (state.coldStart) {
    banner.append(el("div", { class: "cold-start" },
      "new user: showing context popularity until enough usage accumulates"));
  }
  if (state.toast) {
    const toast = el("div", { class: "toast" }, state.toast);
    toast.addEventListener("click", () => store.clearToast());
    banner.append(toast);
  }

  const meta = root.querySelector("#meta") as HTMLElement;
  meta.textContent = state.modelVersion
    ? `model ${state.modelVersion}${state.loading ? " · loading…" : ""}`
    : state.loading ? "loading…" : "";

  const list = root.querySelector("#cards") as HTMLElement;
  list.replaceChildren(...state.cards.map((c) => cardNode(c, store)));

  const compare = root.querySelector("#compare") as HTMLElement;
  compare.replaceChildren();
  if (state.compare && state.compareRows.length) {
    const table = el("table", { class: "compare" });
    const head = el("tr");
    head.append(el("th", {}, "app"), el("th", {}, "context"), el("th", {}, "baseline"), el("th", {}, "Δ"));
    table.append(head);
    for (const row of state.compareRows) {
      const tr = el("tr");
      tr.append(
        el("td", {}, row.name),
        el("td", {}, row.contextRank === null ? "–" : `#${row.contextRank}`),
        el("td", {}, row.baselineRank === null ? "–" : `#${row.baselineRank}`),
      );
      const delta = el("td", { class: "delta" });
      if (row.delta === null) {
        delta.textContent = "·";
      } else if (row.delta === 0) {
        delta.textContent = "0";
      } else {
        const badge = el("span", { class: row.delta > 0 ? "up" : "down" },
          (row.delta > 0 ? "+" : "") + String(row.delta));
        delta.append(badge);
      }
      tr.append(delta);
      table.append(tr);
    }
    compare.append(table);
  }
}
