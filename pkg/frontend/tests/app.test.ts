// Orchestration rules that need controllable network timing: one in-flight
// mutation per pipeline, revision bumps on every accepted mutation, and
// stale marking while views refresh.

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { App } from "../src/app.js";

const FILTERS = [
  {
    name: "threshold_ground_truth",
    params: [
      { name: "array", type: "string", required: true, default: null },
      { name: "threshold", type: "real", required: true, default: null },
    ],
    input_types: ["RectilinearDataset", "ImageDataset"],
    output_types: ["RectilinearDataset", "ImageDataset"],
  },
  {
    name: "data_driven_transform",
    params: [
      { name: "model_path", type: "string", required: true, default: null },
      { name: "array", type: "string", required: false, default: null },
      { name: "top_k", type: "int", required: false, default: 10 },
    ],
    input_types: ["RectilinearDataset", "ImageDataset"],
    output_types: ["RectilinearDataset", "ImageDataset", "TableDataset"],
  },
];

const DATASETS = [
  { id: "demo_t0", format: "vtk", bytes: 10 },
  { id: "demo_t1", format: "vtk", bytes: 10 },
];

interface Deferred {
  path: string;
  resolve(res: Response): void;
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

let pendingPatches: Deferred[];
let pendingTables: Deferred[];
let deferTables: boolean;

function installFetchStub(): void {
  pendingPatches = [];
  pendingTables = [];
  deferTables = false;
  vi.stubGlobal("fetch", (url: string, init: RequestInit = {}) => {
    const path = url.replace(/^https?:\/\/[^/]+/, "").split("?")[0];
    const method = init.method ?? "GET";
    if (method === "PATCH") {
      return new Promise<Response>((resolve) => {
        pendingPatches.push({ path, resolve });
      });
    }
    if (path.endsWith("/table")) {
      if (deferTables) {
        return new Promise<Response>((resolve) => {
          pendingTables.push({ path, resolve });
        });
      }
      return Promise.resolve(json({ detail: "no table" }, 422));
    }
    if (method === "POST" && path === "/api/pipelines") {
      return Promise.resolve(json({ id: "p-1" }, 201));
    }
    switch (path) {
      case "/api/filters":
        return Promise.resolve(json(FILTERS));
      case "/api/datasets":
        return Promise.resolve(json(DATASETS));
      case "/api/models":
      case "/api/jobs":
        return Promise.resolve(json([]));
      default:
        return Promise.resolve(json({ detail: `unexpected ${path}` }, 500));
    }
  });
}

async function flush(): Promise<void> {
  for (let i = 0; i < 20; i++) await Promise.resolve();
}

let app: App;

beforeEach(async () => {
  installFetchStub();
  document.body.innerHTML = "";
  const host = document.createElement("div");
  document.body.appendChild(host);
  app = new App("");
  await app.mount(host);
  await app.openSeries(app.series[0]);
  await app.addFilter("threshold_ground_truth", {});
});

afterEach(() => {
  app.stop();
  vi.unstubAllGlobals();
});

describe("mutation serialization", () => {
  it("holds the second mutation until the first one finished", async () => {
    const first = app.applyParams("f1", { array: "velocity", threshold: 0.1 });
    const second = app.applyParams("f1", { threshold: 0.2 });
    await flush();
    expect(pendingPatches).toHaveLength(1);

    pendingPatches[0].resolve(json({ id: "f1", params: { threshold: 0.1 } }));
    await first;
    await flush();
    expect(pendingPatches).toHaveLength(2);

    pendingPatches[1].resolve(json({ id: "f1", params: { threshold: 0.2 } }));
    await second;
    await app.settled();
  });

  it("keeps accepting mutations after a failed one", async () => {
    const failed = app.applyParams("f1", { array: "velocity", threshold: 0.1 });
    await flush();
    pendingPatches[0].resolve(json({ detail: "no such parameter 'array'" }, 422));
    await failed;

    const ok = app.applyParams("f1", { threshold: 0.3 });
    await flush();
    expect(pendingPatches).toHaveLength(2);
    pendingPatches[1].resolve(json({ id: "f1", params: { threshold: 0.3 } }));
    await ok;
    await app.settled();
  });

  it("bumps the render revision on every accepted mutation", async () => {
    const revOf = () => {
      const img = document.querySelector<HTMLImageElement>(".compare-panel img")!;
      return new URL(img.src, "http://x").searchParams.get("rev");
    };
    const before = revOf();
    const patch = app.applyParams("f1", { array: "velocity", threshold: 0.1 });
    await flush();
    pendingPatches[0].resolve(json({ id: "f1", params: { threshold: 0.1 } }));
    await patch;
    await app.settled();
    const after = revOf();
    expect(after).not.toBe(before);
    expect(Number(after)).toBe(Number(before) + 1);
  });
});

describe("stale marking", () => {
  it("marks the spreadsheet stale until its refresh completes", async () => {
    await app.addFilter("data_driven_transform", {});
    await app.settled();

    deferTables = true;
    const patch = app.applyParams("f2", { model_path: "whole" });
    await flush();
    pendingPatches[0].resolve(json({ id: "f2", params: { model_path: "whole" } }));
    await patch;
    await flush();

    const sheet = document.querySelector(".sheet-host")!;
    expect(pendingTables).toHaveLength(1);
    expect(sheet.classList.contains("stale")).toBe(true);

    pendingTables[0].resolve(
      json({ columns: [{ name: "rank", values: [1] }] }),
    );
    await app.settled();
    expect(sheet.classList.contains("stale")).toBe(false);
    expect(sheet.querySelector("th")!.textContent).toBe("rank");
  });

  it("marks image panels stale until the new bitmap settles", async () => {
    const patch = app.applyParams("f1", { array: "velocity", threshold: 0.1 });
    await flush();
    pendingPatches[0].resolve(json({ id: "f1", params: { threshold: 0.1 } }));
    await patch;
    await app.settled();

    const panels = document.querySelectorAll(".compare-panel");
    expect(panels[0].classList.contains("stale")).toBe(true);
    panels[0].querySelector("img")!.dispatchEvent(new Event("load"));
    expect(panels[0].classList.contains("stale")).toBe(false);
  });
});
