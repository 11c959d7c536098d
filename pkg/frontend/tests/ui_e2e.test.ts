// Scripted end-to-end run against a live service process: the DOM app is
// driven exactly as a user would drive it (clicks, form fills, slider
// scrubs) and every observation goes through the HTTP surface. jsdom does
// not decode bitmaps, so image panels are verified by fetching their src
// URLs and comparing the delivered PNG bytes.

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { App } from "../src/app.js";

const HERE = dirname(fileURLToPath(import.meta.url));

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.listen(0, "127.0.0.1", () => {
      const addr = srv.address();
      if (addr && typeof addr === "object") {
        const port = addr.port;
        srv.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });
}

async function waitForHealth(base: string, timeoutMs = 60_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastErr: unknown = null;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${base}/api/health`);
      if (res.ok) return;
    } catch (err) {
      lastErr = err;
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error(`service did not come up: ${lastErr}`);
}

function input(name: string): HTMLInputElement {
  const node = document.querySelector<HTMLInputElement>(
    `.panel-host input[name="${name}"]`,
  );
  if (!node) throw new Error(`no panel input ${name}`);
  return node;
}

function applyPanel(values: Record<string, string>): void {
  for (const [name, value] of Object.entries(values)) {
    input(name).value = value;
  }
  const form = document.querySelector(".panel-host form");
  if (!form) throw new Error("no property panel form");
  form.dispatchEvent(new Event("submit", { cancelable: true }));
}

function panelImages(): (string | null)[] {
  return [...document.querySelectorAll(".compare-panel")].map((panel) => {
    const img = panel.querySelector("img");
    return img ? img.src : null;
  });
}

async function fetchPng(url: string): Promise<Buffer> {
  const res = await fetch(url);
  expect(res.status).toBe(200);
  expect(res.headers.get("content-type")).toBe("image/png");
  return Buffer.from(await res.arrayBuffer());
}

function sheetRows(): string[][] {
  return [...document.querySelectorAll(".sheet-host tr")].slice(1).map((tr) =>
    [...tr.querySelectorAll("td")].map((td) => td.textContent ?? ""),
  );
}

function sheetHeader(): string[] {
  return [...document.querySelectorAll(".sheet-host th")].map(
    (th) => th.textContent ?? "",
  );
}

let server: ChildProcess;
let base: string;
let dataDir: string;
let app: App;
let inputPngAtT0: Buffer;

beforeAll(async () => {
  const port = await freePort();
  base = `http://127.0.0.1:${port}`;
  dataDir = mkdtempSync(join(tmpdir(), "fieldlens-e2e-"));
  const seeded = spawnSync("python3", [join(HERE, "seed_service.py"), dataDir], {
    encoding: "utf8",
  });
  if (seeded.status !== 0) {
    throw new Error(`seeding failed: ${seeded.stdout}\n${seeded.stderr}`);
  }
  const boot = [
    "import sys",
    "from fieldlens.service import serve",
    "serve(port=int(sys.argv[1]), host='127.0.0.1', data_dir=sys.argv[2])",
  ].join("\n");
  server = spawn("python3", ["-c", boot, String(port), dataDir], {
    stdio: ["ignore", "pipe", "pipe"],
  });
  await waitForHealth(base);

  document.body.innerHTML = "";
  const host = document.createElement("div");
  document.body.appendChild(host);
  app = new App(base);
  await app.mount(host);
});

afterAll(async () => {
  app?.stop();
  server?.kill();
  await new Promise((r) => setTimeout(r, 100));
  rmSync(dataDir, { recursive: true, force: true });
});

describe("web client against a live service", () => {
  it("lists the seeded snapshot series and models after boot", () => {
    const names = [...document.querySelectorAll(".series-name")].map(
      (n) => n.textContent,
    );
    expect(names).toEqual(["demo (3 snapshots)"]);
    const models = [...document.querySelectorAll(".model-id")].map(
      (n) => n.textContent,
    );
    expect(models).toEqual(["point", "whole"]);
  });

  it("opens the series into a pipeline with a live input render", async () => {
    document
      .querySelector<HTMLButtonElement>('button.open-series[data-series="demo"]')!
      .click();
    await app.settled();
    expect(app.pipeline).not.toBeNull();
    const [inputSrc, truthSrc, predSrc] = panelImages();
    expect(inputSrc).toContain("/nodes/src/render");
    expect(truthSrc).toBeNull();
    expect(predSrc).toBeNull();
    await fetchPng(inputSrc!);
  });

  it("attaches a ground-truth threshold filter and edits it in the panel", async () => {
    const pick = document.querySelector<HTMLSelectElement>(".filter-pick")!;
    pick.value = "threshold_ground_truth";
    document.querySelector<HTMLButtonElement>(".add-filter-btn")!.click();
    await app.settled();

    // the generated form mirrors the server schema
    expect(input("array").value).toBe("");
    expect(input("threshold").value).toBe("");

    // a schema-violating value never reaches the server
    const patchesBefore = app.api.log.filter((c) => c.method === "PATCH").length;
    applyPanel({ array: "velocity", threshold: "fast" });
    await app.settled();
    expect(app.api.log.filter((c) => c.method === "PATCH")).toHaveLength(patchesBefore);
    const row = input("threshold").closest(".param-row")!;
    expect(row.querySelector(".param-error")!.textContent).toBe(
      "threshold expects a number",
    );

    // a valid edit is applied and the ground-truth panel starts rendering
    applyPanel({ array: "velocity", threshold: "0.2" });
    await app.settled();
    const patches = app.api.log.filter((c) => c.method === "PATCH");
    expect(patches[patches.length - 1].path).toContain("/nodes/f1/params");
    const [inputSrc, truthSrc] = panelImages();
    const [inputPng, truthPng] = await Promise.all([
      fetchPng(inputSrc!),
      fetchPng(truthSrc!),
    ]);
    expect(truthPng.equals(inputPng)).toBe(false);
  });

  it("attaches the data-driven filter and fills the three-panel compare", async () => {
    const pick = document.querySelector<HTMLSelectElement>(".filter-pick")!;
    pick.value = "data_driven_transform";
    document.querySelector<HTMLButtonElement>(".add-filter-btn")!.click();
    await app.settled();
    applyPanel({ model_path: "point", array: "velocity", top_k: "10" });
    await app.settled();

    const srcs = panelImages();
    expect(srcs.every((s) => s !== null)).toBe(true);
    expect(srcs[0]).toContain("/nodes/src/render");
    expect(srcs[1]).toContain("/nodes/f1/render");
    expect(srcs[2]).toContain("/nodes/f2/render");
    // all three panels redraw against the same revision
    const revs = srcs.map((s) => new URL(s!).searchParams.get("rev"));
    expect(new Set(revs).size).toBe(1);
    const [inputPng, truthPng, predPng] = await Promise.all(
      srcs.map((s) => fetchPng(s!)),
    );
    inputPngAtT0 = inputPng;
    expect(truthPng.equals(predPng)).toBe(false);
  });

  it("shows the ranked spreadsheet exactly as delivered and refreshes on edits", async () => {
    // point at the whole-input classifier; its transform output is a table
    applyPanel({ model_path: "whole", array: "class", top_k: "10" });
    await app.settled();

    expect(sheetHeader()).toEqual(["rank", "label", "confidence_percent"]);
    const before = sheetRows();
    expect(before).toHaveLength(2);
    expect(before.map((r) => r[0])).toEqual(["1", "2"]);
    expect(before[0][1]).toBe("Low");
    const total = before.reduce((acc, r) => acc + Number(r[2]), 0);
    expect(Math.abs(total - 100)).toBeLessThanOrEqual(1e-3);

    // the table-producing node no longer renders as an image
    const predSrc = panelImages()[2]!;
    const res = await fetch(predSrc);
    expect(res.status).toBe(422);
    const detail = (await res.json()).detail as string;
    expect(detail).toContain("table");

    // editing the upstream threshold reranks the rows and the sheet follows
    const tableFetches = () =>
      app.api.log.filter((c) => c.path.endsWith("/table")).length;
    const fetchesBefore = tableFetches();
    document
      .querySelector<HTMLButtonElement>('button.chain-node[data-node="f1"]')!
      .click();
    applyPanel({ array: "velocity", threshold: "0.9" });
    await app.settled();
    expect(tableFetches()).toBeGreaterThan(fetchesBefore);
    const after = sheetRows();
    expect(after[0][1]).toBe("High");
    expect(after.map((r) => r[1])).toEqual(["High", "Low"]);
  });

  it("scrubs the time series by patching the pipeline source", async () => {
    const slider = document.querySelector<HTMLInputElement>(".scrub-slider")!;
    slider.value = "2";
    slider.dispatchEvent(new Event("input"));
    await app.settled();

    expect(app.snapshotIndex).toBe(2);
    const patches = app.api.log.filter((c) => c.method === "PATCH");
    expect(patches[patches.length - 1].path).toContain("/nodes/src/source");
    expect(document.querySelector(".scrub-label")!.textContent).toBe("t=2");

    const inputSrc = panelImages()[0]!;
    const png = await fetchPng(inputSrc);
    expect(png.equals(inputPngAtT0)).toBe(false);
  });

  it("recorded only documented api calls, replayable in order", () => {
    expect(app.api.log.length).toBeGreaterThan(10);
    for (const call of app.api.log) {
      expect(call.path.startsWith("/api/")).toBe(true);
    }
    const mutations = app.api.log
      .filter((c) => c.method !== "GET")
      .map((c) => `${c.method} ${c.path.replace(/p-\d+/, "p")}`);
    expect(mutations).toEqual([
      "POST /api/pipelines",
      "POST /api/pipelines",
      "PATCH /api/pipelines/p/nodes/f1/params",
      "POST /api/pipelines",
      "PATCH /api/pipelines/p/nodes/f2/params",
      "PATCH /api/pipelines/p/nodes/f2/params",
      "PATCH /api/pipelines/p/nodes/f1/params",
      "PATCH /api/pipelines/p/nodes/src/source",
    ]);
  });
});
