import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

interface Recorded {
  url: string;
  init?: RequestInit;
}

function fakeFetch(responder: (url: string, init?: RequestInit) => Response) {
  const calls: Recorded[] = [];
  const impl = async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    return responder(url, init);
  };
  return { impl, calls };
}

const ok = (body: unknown) =>
  new Response(JSON.stringify(body), { status: 200, headers: { "Content-Type": "application/json" } });

describe("ApiClient", () => {
  it("posts the documented recommend body", async () => {
    const { impl, calls } = fakeFetch(() =>
      ok({ items: [], cold_start: false, model_version: "v", variant: "context" }),
    );
    const api = new ApiClient("", impl);
    await api.recommend("u1", { daytime: "evening" }, 5, { excludeInstalled: false });
    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe("/recommend");
    const body = JSON.parse(String(calls[0].init?.body));
    expect(body).toEqual({
      user: "u1",
      context: { daytime: "evening" },
      n: 5,
      exclude_installed: false,
      variant: "context",
    });
  });

  it("posts feedback with the current context", async () => {
    const { impl, calls } = fakeFetch(() => ok({ ok: true }));
    const api = new ApiClient("", impl);
    await api.feedback({
      user: "u1",
      app: "a1",
      kind: "installed",
      context: { daytime: "night" },
      timestamp: 123,
    });
    expect(calls[0].url).toBe("/feedback");
    const body = JSON.parse(String(calls[0].init?.body));
    expect(body.kind).toBe("installed");
    expect(body.context).toEqual({ daytime: "night" });
  });

  it("surfaces error detail from non-2xx responses", async () => {
    const { impl } = fakeFetch(
      () => new Response(JSON.stringify({ detail: "unknown user" }), { status: 404 }),
    );
    const api = new ApiClient("", impl);
    await expect(api.recommend("ghost", {}, 3)).rejects.toThrowError(ApiError);
    await expect(api.recommend("ghost", {}, 3)).rejects.toThrow("unknown user");
  });

  it("fetches the context schema", async () => {
    const { impl, calls } = fakeFetch(() => ok({ dimensions: [] }));
    const api = new ApiClient("http://srv", impl);
    await api.contextSchema();
    expect(calls[0].url).toBe("http://srv/schema/context");
  });
});
