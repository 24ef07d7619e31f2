/** Client state: context selection, cards, latest-wins fetching, feedback. */

import { ApiClient } from "./api.js";
import type {
  Card,
  CardAction,
  ContextSchema,
  ContextSelection,
  FeedbackKind,
  RecommendItem,
} from "./types.js";

export interface CompareRow {
  app: string;
  name: string;
  contextRank: number | null;
  baselineRank: number | null;
  /** positive = the context model ranks this app higher (closer to 1) */
  delta: number | null;
}

export interface State {
  user: string;
  n: number;
  selection: ContextSelection;
  cards: Card[];
  coldStart: boolean;
  modelVersion: string;
  excludeInstalled: boolean;
  compare: boolean;
  compareRows: CompareRow[];
  baselineVersion: string;
  loading: boolean;
  error: string | null;
  toast: string | null;
}

type Listener = (state: State) => void;

/** Rank deltas between the context list and the baseline list. */
export function compareRows(context: RecommendItem[], baseline: RecommendItem[]): CompareRow[] {
  const byApp = new Map<string, CompareRow>();
  for (const item of context) {
    byApp.set(item.app, {
      app: item.app,
      name: item.name,
      contextRank: item.rank,
      baselineRank: null,
      delta: null,
    });
  }
  for (const item of baseline) {
    const row = byApp.get(item.app);
    if (row) {
      row.baselineRank = item.rank;
    } else {
      byApp.set(item.app, {
        app: item.app,
        name: item.name,
        contextRank: null,
        baselineRank: item.rank,
        delta: null,
      });
    }
  }
  const rows = [...byApp.values()];
  for (const row of rows) {
    if (row.contextRank !== null && row.baselineRank !== null) {
      row.delta = row.baselineRank - row.contextRank;
    }
  }
  rows.sort((a, b) => (a.contextRank ?? Infinity) - (b.contextRank ?? Infinity));
  return rows;
}

export class ExplorerStore {
  state: State;
  private listeners: Listener[] = [];
  private requestSeq = 0;
  private controller: AbortController | null = null;

  constructor(
    private api: ApiClient,
    user = "explorer",
    private makeController: () => AbortController | null = () =>
      typeof AbortController !== "undefined" ? new AbortController() : null,
  ) {
    this.state = {
      user,
      n: 21,
      selection: {},
      cards: [],
      coldStart: false,
      modelVersion: "",
      excludeInstalled: true,
      compare: false,
      compareRows: [],
      baselineVersion: "",
      loading: false,
      error: null,
      toast: null,
    };
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private emit() {
    for (const fn of this.listeners) fn(this.state);
  }

  private patch(changes: Partial<State>) {
    this.state = { ...this.state, ...changes };
    this.emit();
  }

  async init(): Promise<ContextSchema> {
    const schema = await this.api.contextSchema();
    const selection: ContextSelection = {};
    for (const dim of schema.dimensions) selection[dim.name] = dim.default;
    this.patch({ selection });
    return schema;
  }

  setUser(user: string) {
    this.patch({ user });
    void this.refresh();
  }

  setN(n: number) {
    this.patch({ n });
    void this.refresh();
  }

  setExcludeInstalled(on: boolean) {
    this.patch({ excludeInstalled: on });
    void this.refresh();
  }

  setCompare(on: boolean) {
    this.patch({ compare: on });
    void this.refresh();
  }

  /** Change one context knob; triggers exactly one (latest-wins) fetch. */
  setDimension(dimension: string, value: string) {
    this.patch({ selection: { ...this.state.selection, [dimension]: value } });
    void this.refresh();
  }

  /**
   * Fetch recommendations for the current selection. Only the newest request
   * may apply its result: older in-flight requests are aborted and any
   * stale response that still resolves is dropped.
   */
  async refresh(): Promise<void> {
    const seq = ++this.requestSeq;
    this.controller?.abort();
    const controller = this.makeController();
    this.controller = controller;
    this.patch({ loading: true });
    try {
      const main = await this.api.recommend(this.state.user, this.state.selection, this.state.n, {
        excludeInstalled: this.state.excludeInstalled,
        signal: controller?.signal,
      });
      let rows: CompareRow[] = [];
      let baselineVersion = "";
      if (this.state.compare) {
        const baseline = await this.api.recommend(
          this.state.user,
          this.state.selection,
          this.state.n,
          { excludeInstalled: this.state.excludeInstalled, variant: "baseline", signal: controller?.signal },
        );
        rows = compareRows(main.items, baseline.items);
        baselineVersion = baseline.model_version;
      }
      if (seq !== this.requestSeq) return; // superseded by a newer selection
      this.patch({
        cards: main.items.map((item) => ({ ...item, action: "none" as CardAction })),
        coldStart: main.cold_start,
        modelVersion: main.model_version,
        compareRows: rows,
        baselineVersion,
        loading: false,
        error: null,
      });
    } catch (err) {
      if (seq !== this.requestSeq) return; // stale failure; a newer request owns the state
      const message = err instanceof Error ? err.message : String(err);
      if (message.includes("abort")) return;
      // keep the last successful list on screen, surface the error inline
      this.patch({ loading: false, error: message });
    }
  }

  /**
   * Send one feedback action for a card. Idempotent per state transition:
   * repeating the same action (for example a double click) is a no-op and
   * must not POST again. On failure the card state rolls back and a toast
   * is raised.
   */
  async act(app: string, kind: FeedbackKind): Promise<void> {
    const card = this.state.cards.find((c) => c.app === app);
    if (!card) return;
    const target: CardAction = kind === "uninstalled" ? "none" : kind;
    if (card.action === target) return;
    const previous = card.action;
    this.patch({
      cards: this.state.cards.map((c) => (c.app === app ? { ...c, action: target } : c)),
    });
    try {
      await this.api.feedback({
        user: this.state.user,
        app,
        kind,
        context: this.state.selection,
        timestamp: Date.now() / 1000,
      });
    } catch (err) {
      this.patch({
        cards: this.state.cards.map((c) => (c.app === app ? { ...c, action: previous } : c)),
        toast: `feedback failed: ${err instanceof Error ? err.message : err}`,
      });
    }
  }

  clearToast() {
    this.patch({ toast: null });
  }
}
