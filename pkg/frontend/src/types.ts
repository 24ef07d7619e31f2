/** JSON shapes of the recommendation service endpoints. */

export interface DimensionSchema {
  name: string;
  values: string[];
  open: boolean;
  default: string;
}

export interface ContextSchema {
  dimensions: DimensionSchema[];
}

/** One selected value per contextual dimension. */
export type ContextSelection = Record<string, string>;

export interface FactorPayload {
  dimension: string;
  value: string;
  observed: number;
  expected: number;
  chi2: number;
  df: number;
  p: number;
}

export interface RecommendItem {
  app: string;
  name: string;
  category: string;
  score: number;
  rank: number;
  explanation: string;
  factors: FactorPayload[];
}

export interface RecommendResponse {
  items: RecommendItem[];
  cold_start: boolean;
  model_version: string;
  variant: string;
}

export type CardAction = "none" | "viewed" | "installed" | "skipped";

export interface Card extends RecommendItem {
  action: CardAction;
}

export type FeedbackKind = "viewed" | "installed" | "skipped" | "uninstalled";

export interface FeedbackBody {
  user: string;
  app: string;
  kind: FeedbackKind;
  context: ContextSelection;
  timestamp?: number;
}
