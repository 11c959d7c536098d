// Application state and orchestration. One composer pipeline at a time:
// a source node fed by the selected snapshot plus a chain of filters.
// Mutations are serialized per pipeline; views are marked stale while a
// refresh is in flight.

import {
  ApiClient,
  ApiError,
  type FilterSchema,
  type JobInfo,
  type ModelMeta,
  type TablePayload,
} from "./api.js";
import { groupSeries, type Series } from "./series.js";
import {
  clear,
  compareStrip,
  el,
  jobList,
  modelList,
  propertyPanel,
  scrubber,
  seriesList,
  spreadsheet,
  type ComparePanelSpec,
  type PropertyPanel,
} from "./views.js";

const SOURCE_ID = "src";
const RENDER_SIZE = { w: 300, h: 300 };

interface ChainFilter {
  id: string;
  filterType: string;
  params: Record<string, unknown>;
}

export class App {
  readonly api: ApiClient;
  filters: FilterSchema[] = [];
  models: ModelMeta[] = [];
  series: Series[] = [];

  activeSeries: Series | null = null;
  snapshotIndex = 0;
  pipeline: { id: string } | null = null;
  chain: ChainFilter[] = [];
  selectedNode: string = SOURCE_ID;
  rev = 0;

  panel: PropertyPanel | null = null;
  lastTable: TablePayload | null = null;

  private mutationTail: Promise<void> = Promise.resolve();
  private refreshTail: Promise<void> = Promise.resolve();
  private nextFilterId = 1;
  private jobTimer: ReturnType<typeof setInterval> | null = null;
  private root!: {
    series: HTMLElement;
    models: HTMLElement;
    chain: HTMLElement;
    panel: HTMLElement;
    scrub: HTMLElement;
    compare: HTMLElement;
    sheet: HTMLElement;
    jobs: HTMLElement;
    banner: HTMLElement;
  };

  constructor(base = "") {
    this.api = new ApiClient(base);
  }

  // -- boot --------------------------------------------------------------------

  async mount(host: HTMLElement): Promise<void> {
    host.appendChild(this.buildLayout());
    this.filters = await this.api.listFilters();
    await this.reloadDatasets();
    await this.reloadModels();
    this.renderJobs([]);
    this.startJobPolling();
  }

  private buildLayout(): HTMLElement {
    const page = el("div", "page");
    const banner = el("p", "banner");
    const sidebar = el("aside", "sidebar");
    const seriesBox = el("section", "box series-box");
    seriesBox.appendChild(el("h2", undefined, "datasets"));
    const seriesHost = el("div");
    seriesBox.appendChild(seriesHost);
    seriesBox.appendChild(this.buildUpload());
    seriesBox.appendChild(this.buildSimulateForm());
    const modelBox = el("section", "box model-box");
    modelBox.appendChild(el("h2", undefined, "models"));
    const modelHost = el("div");
    modelBox.appendChild(modelHost);
    modelBox.appendChild(this.buildTrainForm());
    const jobBox = el("section", "box job-box");
    jobBox.appendChild(el("h2", undefined, "jobs"));
    const jobHost = el("div");
    jobBox.appendChild(jobHost);
    sidebar.appendChild(seriesBox);
    sidebar.appendChild(modelBox);
    sidebar.appendChild(jobBox);

    const main = el("main", "workbench");
    const chainHost = el("div", "chain-bar");
    const scrubHost = el("div", "scrub-host");
    const compareHost = el("div", "compare-host");
    const panelHost = el("div", "panel-host");
    const sheetHost = el("div", "sheet-host");
    main.appendChild(banner);
    main.appendChild(chainHost);
    main.appendChild(scrubHost);
    main.appendChild(compareHost);
    const lower = el("div", "lower-split");
    lower.appendChild(panelHost);
    lower.appendChild(sheetHost);
    main.appendChild(lower);

    page.appendChild(sidebar);
    page.appendChild(main);
    this.root = {
      series: seriesHost,
      models: modelHost,
      chain: chainHost,
      panel: panelHost,
      scrub: scrubHost,
      compare: compareHost,
      sheet: sheetHost,
      jobs: jobHost,
      banner,
    };
    this.renderChain();
    this.renderCompare();
    this.renderSheet();
    return page;
  }

  private buildUpload(): HTMLElement {
    const wrap = el("div", "upload");
    const input = el("input", "upload-input");
    input.type = "file";
    input.accept = ".vtk,.png";
    input.addEventListener("change", async () => {
      const file = input.files?.[0];
      if (!file) return;
      try {
        await this.api.uploadDataset(file.name, file);
        await this.reloadDatasets();
      } catch (err) {
        this.showBanner(err);
      }
    });
    wrap.appendChild(input);
    return wrap;
  }

  private buildSimulateForm(): HTMLElement {
    const form = el("form", "simulate-form");
    const fields: [string, string][] = [
      ["re", "10"], ["lid", "2.0"], ["nx", "50"], ["ny", "50"],
      ["t_end", "20"], ["tag", ""],
    ];
    const inputs = new Map<string, HTMLInputElement>();
    for (const [name, preset] of fields) {
      const label = el("label", "sim-label", name);
      const input = el("input", "sim-input");
      input.name = name;
      input.value = preset;
      label.appendChild(input);
      form.appendChild(label);
      inputs.set(name, input);
    }
    const go = el("button", "run-simulate", "simulate");
    go.type = "submit";
    form.appendChild(go);
    form.addEventListener("submit", async (event) => {
      event.preventDefault();
      const body: Record<string, unknown> = {};
      for (const [name, input] of inputs) {
        const text = input.value.trim();
        if (text === "") continue;
        body[name] = name === "tag" ? text : Number(text);
      }
      try {
        await this.api.simulate(body);
        await this.pollJobsOnce();
      } catch (err) {
        this.showBanner(err);
      }
    });
    return form;
  }

  private buildTrainForm(): HTMLElement {
    const form = el("form", "train-form");
    const kind = el("select", "train-kind") as HTMLSelectElement;
    for (const value of ["velocity", "pressure"]) {
      const opt = el("option", undefined, value) as HTMLOptionElement;
      opt.value = value;
      kind.appendChild(opt);
    }
    form.appendChild(kind);
    const go = el("button", "run-train", "train");
    go.type = "submit";
    form.appendChild(go);
    form.addEventListener("submit", async (event) => {
      event.preventDefault();
      try {
        await this.api.train({ model: kind.value });
        await this.pollJobsOnce();
      } catch (err) {
        this.showBanner(err);
      }
    });
    return form;
  }

  // -- data loading ---------------------------------------------------------------

  async reloadDatasets(): Promise<void> {
    this.series = groupSeries(await this.api.listDatasets());
    clear(this.root.series);
    this.root.series.appendChild(
      seriesList(this.series, (s) => void this.openSeries(s)),
    );
  }

  async reloadModels(): Promise<void> {
    this.models = await this.api.listModels();
    clear(this.root.models);
    this.root.models.appendChild(modelList(this.models));
  }

  // -- pipeline composition ---------------------------------------------------------

  openSeries(series: Series): Promise<void> {
    this.activeSeries = series;
    this.snapshotIndex = 0;
    this.chain = [];
    this.selectedNode = SOURCE_ID;
    this.nextFilterId = 1;
    return this.queueMutation(() => this.rebuildPipeline());
  }

  // The HTTP surface mutates params and sources in place but has no
  // add-node call, so a change of chain shape posts a fresh pipeline
  // document carrying the current snapshot and parameters.
  private async rebuildPipeline(): Promise<void> {
    if (!this.activeSeries) return;
    const nodes = [
      {
        id: SOURCE_ID,
        kind: "source" as const,
        dataset: this.activeSeries.snapshots[this.snapshotIndex].id,
      },
      ...this.chain.map((f) => ({
        id: f.id,
        kind: "filter" as const,
        filter_type: f.filterType,
        params: f.params,
      })),
    ];
    const edges: [string, string][] = [];
    let prev = SOURCE_ID;
    for (const f of this.chain) {
      edges.push([prev, f.id]);
      prev = f.id;
    }
    try {
      this.pipeline = await this.api.createPipeline(nodes, edges);
      this.rev++;
      this.refreshViews();
      this.renderChain();
      this.renderScrubber();
      this.renderPanel();
    } catch (err) {
      this.showBanner(err);
    }
  }

  addFilter(filterType: string, params: Record<string, unknown>): Promise<void> {
    const id = `f${this.nextFilterId++}`;
    this.chain.push({ id, filterType, params });
    this.selectedNode = id;
    return this.queueMutation(() => this.rebuildPipeline());
  }

  selectNode(id: string): void {
    this.selectedNode = id;
    this.renderChain();
    this.renderPanel();
    this.refreshViews();
  }

  // -- mutations ---------------------------------------------------------------------

  // All pipeline mutations flow through here: strictly one in flight at a
  // time, and every one ends in a view refresh.
  private queueMutation(run: () => Promise<void>): Promise<void> {
    const next = this.mutationTail.then(run);
    // keep the chain alive after failures; errors surface in run itself
    this.mutationTail = next.catch(() => undefined);
    return next;
  }

  applyParams(nodeId: string, values: Record<string, unknown>): Promise<void> {
    return this.queueMutation(async () => {
      if (!this.pipeline) return;
      try {
        const updated = await this.api.patchParams(this.pipeline.id, nodeId, values);
        const entry = this.chain.find((f) => f.id === nodeId);
        if (entry) entry.params = updated.params;
        this.rev++;
        this.refreshViews();
      } catch (err) {
        if (err instanceof ApiError && this.panel) {
          this.panel.setServerError(err.message);
        } else {
          this.showBanner(err);
        }
      }
    });
  }

  scrubTo(index: number): Promise<void> {
    return this.queueMutation(async () => {
      if (!this.pipeline || !this.activeSeries) return;
      const snap = this.activeSeries.snapshots[index];
      if (!snap) return;
      try {
        await this.api.patchSource(this.pipeline.id, SOURCE_ID, snap.id);
        this.snapshotIndex = index;
        this.rev++;
        this.refreshViews();
      } catch (err) {
        this.showBanner(err);
      }
    });
  }

  // -- view refresh -------------------------------------------------------------------

  // Rebuild the compare strip and spreadsheet against the current revision.
  // The returned promise (tracked in refreshTail) settles when the table
  // fetch finished; images clear their own stale mark on load.
  refreshViews(): Promise<void> {
    const work = (async () => {
      this.renderCompare();
      await this.renderSheet();
    })();
    this.refreshTail = this.refreshTail.then(() => work).catch(() => undefined);
    return work;
  }

  // Test hook: resolves once queued mutations and view refreshes settled.
  async settled(): Promise<void> {
    await this.mutationTail;
    await this.refreshTail;
  }

  private comparePanels(): ComparePanelSpec[] {
    const panels: ComparePanelSpec[] = [
      { caption: "input", url: null },
      { caption: "ground truth", url: null },
      { caption: "prediction", url: null },
    ];
    if (!this.pipeline) return panels;
    const pid = this.pipeline.id;
    panels[0].url = this.api.renderUrl(pid, SOURCE_ID, this.rev, {
      array: this.defaultSourceArray(),
      tf: "coolwarm",
      ...RENDER_SIZE,
    });
    const truth = this.chain.find((f) => f.filterType === "threshold_ground_truth");
    if (truth) {
      panels[1].url = this.api.renderUrl(pid, truth.id, this.rev, {
        array: "class",
        ...RENDER_SIZE,
      });
    }
    const pred = this.chain.find((f) => f.filterType === "data_driven_transform");
    if (pred) {
      panels[2].url = this.api.renderUrl(pid, pred.id, this.rev, {
        array: "color",
        ...RENDER_SIZE,
      });
    }
    return panels;
  }

  private defaultSourceArray(): string {
    // render whatever the ground-truth filter thresholds, else the first array
    const truth = this.chain.find((f) => f.filterType === "threshold_ground_truth");
    const fromTruth = truth?.params["array"];
    if (typeof fromTruth === "string") return fromTruth;
    return "velocity";
  }

  private renderCompare(): void {
    clear(this.root.compare);
    this.root.compare.appendChild(compareStrip(this.comparePanels()));
  }

  // The spreadsheet tracks the last chain node that can produce a table
  // (the data-driven transform); when its actual output is a grid the
  // placeholder state stays.
  private async renderSheet(): Promise<void> {
    this.root.sheet.classList.add("stale");
    let payload: TablePayload | null = null;
    const node = [...this.chain]
      .reverse()
      .find((f) => this.filterSchema(f.filterType)?.output_types.includes("TableDataset"));
    if (this.pipeline && node) {
      try {
        payload = await this.api.table(this.pipeline.id, node.id);
      } catch (err) {
        if (!(err instanceof ApiError)) this.showBanner(err);
        payload = null; // grid output or execution error: placeholder state
      }
    }
    this.lastTable = payload;
    clear(this.root.sheet);
    this.root.sheet.appendChild(spreadsheet(payload));
    this.root.sheet.classList.remove("stale");
  }

  filterSchema(name: string): FilterSchema | undefined {
    return this.filters.find((f) => f.name === name);
  }

  // -- chain bar and property panel ----------------------------------------------------

  private renderChain(): void {
    clear(this.root.chain);
    const bar = el("div", "chain");
    const src = el("button", "chain-node" + (this.selectedNode === SOURCE_ID ? " selected" : ""));
    src.textContent = this.activeSeries
      ? `source: ${this.activeSeries.snapshots[this.snapshotIndex].id}`
      : "source: none";
    src.dataset.node = SOURCE_ID;
    src.addEventListener("click", () => this.selectNode(SOURCE_ID));
    bar.appendChild(src);
    for (const f of this.chain) {
      bar.appendChild(el("span", "chain-arrow", "->"));
      const btn = el(
        "button",
        "chain-node" + (this.selectedNode === f.id ? " selected" : ""),
      );
      btn.textContent = `${f.id}: ${f.filterType}`;
      btn.dataset.node = f.id;
      btn.addEventListener("click", () => this.selectNode(f.id));
      bar.appendChild(btn);
    }
    if (this.activeSeries) bar.appendChild(this.buildAddFilter());
    this.root.chain.appendChild(bar);
  }

  private buildAddFilter(): HTMLElement {
    const wrap = el("span", "add-filter");
    const pick = el("select", "filter-pick") as HTMLSelectElement;
    for (const f of this.filters) {
      const opt = el("option", undefined, f.name) as HTMLOptionElement;
      opt.value = f.name;
      pick.appendChild(opt);
    }
    const add = el("button", "add-filter-btn", "+ filter");
    add.addEventListener("click", () => {
      void this.addFilter(pick.value, {});
    });
    wrap.appendChild(pick);
    wrap.appendChild(add);
    return wrap;
  }

  private renderScrubber(): void {
    clear(this.root.scrub);
    if (!this.activeSeries || this.activeSeries.snapshots.length < 2) return;
    this.root.scrub.appendChild(
      scrubber(this.activeSeries, this.snapshotIndex, (i) => void this.scrubTo(i)),
    );
  }

  private renderPanel(): void {
    clear(this.root.panel);
    this.panel = null;
    const node = this.chain.find((f) => f.id === this.selectedNode);
    if (!node) {
      this.root.panel.appendChild(
        el("p", "placeholder", "select a filter to edit its parameters"),
      );
      return;
    }
    const schema = this.filterSchema(node.filterType);
    if (!schema) return;
    this.panel = propertyPanel(schema, node.params, (values) => {
      void this.applyParams(node.id, values);
    });
    this.root.panel.appendChild(this.panel.element);
  }

  // -- jobs ------------------------------------------------------------------------------

  private renderJobs(jobs: JobInfo[]): void {
    clear(this.root.jobs);
    this.root.jobs.appendChild(jobList(jobs));
  }

  async pollJobsOnce(): Promise<JobInfo[]> {
    const jobs = await this.api.listJobs();
    this.renderJobs(jobs);
    return jobs;
  }

  private startJobPolling(): void {
    let busy = false;
    let hadActive = false;
    this.jobTimer = setInterval(async () => {
      if (busy) return;
      busy = true;
      try {
        const jobs = await this.api.listJobs();
        this.renderJobs(jobs);
        const active = jobs.some((j) => j.status === "queued" || j.status === "running");
        if (hadActive && !active) {
          // something just finished: new datasets or models may exist
          await this.reloadDatasets();
          await this.reloadModels();
        }
        hadActive = active;
      } catch {
        // transient polling errors leave the last view in place
      } finally {
        busy = false;
      }
    }, 1000);
  }

  stop(): void {
    if (this.jobTimer !== null) clearInterval(this.jobTimer);
    this.jobTimer = null;
  }

  private showBanner(err: unknown): void {
    this.root.banner.textContent = err instanceof Error ? err.message : String(err);
  }
}
