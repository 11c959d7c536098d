import { afterEach, describe, expect, it, vi } from "vitest";
import { ApiClient, ApiError } from "../src/api.js";

interface Captured {
  url: string;
  init: RequestInit;
}

function stubFetch(status: number, body: unknown): Captured[] {
  const calls: Captured[] = [];
  vi.stubGlobal("fetch", async (url: string, init: RequestInit = {}) => {
    calls.push({ url, init });
    return new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
  });
  return calls;
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("ApiClient", () => {
  it("builds documented paths and records every call", async () => {
    const calls = stubFetch(200, []);
    const api = new ApiClient("http://svc");
    await api.listDatasets();
    await api.dataset("a b");
    await api.table("p1", "f1");
    expect(calls.map((c) => c.url)).toEqual([
      "http://svc/api/datasets",
      "http://svc/api/datasets/a%20b",
      "http://svc/api/pipelines/p1/nodes/f1/table",
    ]);
    expect(api.log).toEqual([
      { method: "GET", path: "/api/datasets" },
      { method: "GET", path: "/api/datasets/a%20b" },
      { method: "GET", path: "/api/pipelines/p1/nodes/f1/table" },
    ]);
  });

  it("sends JSON bodies for mutations", async () => {
    const calls = stubFetch(200, { id: "f1", params: { threshold: 0.5 } });
    const api = new ApiClient();
    await api.patchParams("p1", "f1", { threshold: 0.5 });
    expect(calls[0].url).toBe("/api/pipelines/p1/nodes/f1/params");
    expect(calls[0].init.method).toBe("PATCH");
    expect(calls[0].init.headers).toEqual({ "content-type": "application/json" });
    expect(JSON.parse(calls[0].init.body as string)).toEqual({ threshold: 0.5 });
  });

  it("uploads dataset bytes with the name in the query string", async () => {
    const calls = stubFetch(201, { id: "snap" });
    const api = new ApiClient();
    const out = await api.uploadDataset("snap.vtk", "# vtk DataFile Version 3.0");
    expect(out.id).toBe("snap");
    expect(calls[0].url).toBe("/api/datasets?name=snap.vtk");
    expect(calls[0].init.method).toBe("POST");
  });

  it("surfaces the server's error detail", async () => {
    stubFetch(422, { detail: "threshold expects a real number" });
    const api = new ApiClient();
    const err = await api.simulate({ re: -1 }).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(422);
    expect(err.message).toBe("threshold expects a real number");
  });

  it("falls back to the status line for non-JSON errors", async () => {
    vi.stubGlobal("fetch", async () => new Response("boom", { status: 500, statusText: "oops" }));
    const api = new ApiClient();
    const err = await api.health().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.message).toBe("500 oops");
  });

  it("builds render urls with a revision cache-buster", () => {
    const api = new ApiClient();
    const url = api.renderUrl("p1", "src", 7, {
      array: "velocity",
      tf: "coolwarm",
      w: 300,
      h: 200,
    });
    const parsed = new URL(url, "http://x");
    expect(parsed.pathname).toBe("/api/pipelines/p1/nodes/src/render");
    expect(parsed.searchParams.get("rev")).toBe("7");
    expect(parsed.searchParams.get("array")).toBe("velocity");
    expect(parsed.searchParams.get("tf")).toBe("coolwarm");
    expect(parsed.searchParams.get("w")).toBe("300");
    expect(parsed.searchParams.get("h")).toBe("200");
    expect(parsed.searchParams.has("range")).toBe(false);
  });
});
