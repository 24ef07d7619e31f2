/** Thin client over the recommendation service's JSON endpoints. */

import type {
  ContextSchema,
  ContextSelection,
  FeedbackBody,
  RecommendResponse,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function expectJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
    } catch {
      /* keep statusText */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  contextSchema(): Promise<ContextSchema> {
    return this.fetchImpl(`${this.baseUrl}/schema/context`).then((r) =>
      expectJson<ContextSchema>(r),
    );
  }

  recommend(
    user: string,
    context: ContextSelection,
    n: number,
    options: { excludeInstalled?: boolean; variant?: string; signal?: AbortSignal } = {},
  ): Promise<RecommendResponse> {
    return this.fetchImpl(`${this.baseUrl}/recommend`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        user,
        context,
        n,
        exclude_installed: options.excludeInstalled ?? true,
        variant: options.variant ?? "context",
      }),
      signal: options.signal,
    }).then((r) => expectJson<RecommendResponse>(r));
  }

  feedback(body: FeedbackBody): Promise<void> {
    return this.fetchImpl(`${this.baseUrl}/feedback`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    }).then((r) => expectJson<{ ok: boolean }>(r)) as unknown as Promise<void>;
  }
}
