// DOM builders. Each function renders server-provided data into elements
// and reports user intent through callbacks; no view computes anything the
// engine already computes.

import type { FilterSchema, JobInfo, ModelMeta, TablePayload } from "./api.js";
import { checkForm, initialText } from "./schema.js";
import type { Series } from "./series.js";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

// -- series list --------------------------------------------------------------

export function seriesList(
  series: Series[],
  onOpen: (s: Series) => void,
): HTMLElement {
  const root = el("div", "series-list");
  if (series.length === 0) {
    root.appendChild(el("p", "placeholder", "no datasets yet"));
    return root;
  }
  for (const s of series) {
    const row = el("div", "series-row");
    const label = s.snapshots.length > 1
      ? `${s.name} (${s.snapshots.length} snapshots)`
      : s.name;
    row.appendChild(el("span", "series-name", label));
    const open = el("button", "open-series", "open");
    open.dataset.series = s.name;
    open.addEventListener("click", () => onOpen(s));
    row.appendChild(open);
    root.appendChild(row);
  }
  return root;
}

// -- model list ---------------------------------------------------------------

export function modelList(models: ModelMeta[]): HTMLElement {
  const root = el("div", "model-list");
  if (models.length === 0) {
    root.appendChild(el("p", "placeholder", "no models yet"));
    return root;
  }
  for (const m of models) {
    const row = el("div", "model-row");
    row.appendChild(el("span", "model-id", m.id));
    row.appendChild(
      el("span", "model-info", `${m.kind}, ${m.parameters} parameters`),
    );
    root.appendChild(row);
  }
  return root;
}

// -- property panel -----------------------------------------------------------

export interface PropertyPanel {
  element: HTMLElement;
  setServerError(message: string): void;
  clearErrors(): void;
}

// Editable parameter form generated from the filter's declared schema.
// Values that violate the schema never leave the form; the Apply button
// hands validated values to onApply.
export function propertyPanel(
  schema: FilterSchema,
  current: Record<string, unknown> | undefined,
  onApply: (values: Record<string, unknown>) => void,
): PropertyPanel {
  const root = el("div", "property-panel");
  root.appendChild(el("h3", "panel-title", schema.name));
  const form = el("form", "param-form");
  const inputs = new Map<string, HTMLInputElement>();
  const errors = new Map<string, HTMLElement>();

  for (const param of schema.params) {
    const row = el("div", "param-row");
    const label = el("label", "param-label", param.name + (param.required ? " *" : ""));
    const input = el("input", "param-input");
    input.name = param.name;
    input.value = initialText(param, current);
    label.appendChild(input);
    row.appendChild(label);
    const err = el("span", "param-error");
    row.appendChild(err);
    form.appendChild(row);
    inputs.set(param.name, input);
    errors.set(param.name, err);
  }

  const apply = el("button", "apply-params", "apply");
  apply.type = "submit";
  form.appendChild(apply);
  const panelError = el("p", "panel-error");
  form.appendChild(panelError);
  root.appendChild(form);

  const clearErrors = () => {
    panelError.textContent = "";
    for (const e of errors.values()) e.textContent = "";
  };

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    clearErrors();
    const raw: Record<string, string> = {};
    for (const [name, input] of inputs) raw[name] = input.value;
    const result = checkForm(schema.params, raw);
    if (!result.ok) {
      for (const [name, message] of Object.entries(result.errors)) {
        errors.get(name)!.textContent = message;
      }
      return;
    }
    onApply(result.values);
  });

  return {
    element: root,
    // Server-side rejections land on the named field when the message
    // quotes a parameter name, otherwise on the panel line.
    setServerError(message: string) {
      for (const [name, err] of errors) {
        if (message.includes(`'${name}'`)) {
          err.textContent = message;
          return;
        }
      }
      panelError.textContent = message;
    },
    clearErrors,
  };
}

// -- snapshot scrubber ----------------------------------------------------------

export function scrubber(
  series: Series,
  index: number,
  onScrub: (index: number) => void,
): HTMLElement {
  const root = el("div", "scrubber");
  const slider = el("input", "scrub-slider");
  slider.type = "range";
  slider.min = "0";
  slider.max = String(series.snapshots.length - 1);
  slider.value = String(index);
  const label = el("span", "scrub-label", `t=${series.snapshots[index].time}`);
  slider.addEventListener("input", () => {
    const i = Number(slider.value);
    label.textContent = `t=${series.snapshots[i].time}`;
    onScrub(i);
  });
  root.appendChild(slider);
  root.appendChild(label);
  return root;
}

// -- compare strip --------------------------------------------------------------

export interface ComparePanelSpec {
  caption: string;
  url: string | null; // null renders the placeholder state
}

export function compareStrip(panels: ComparePanelSpec[]): HTMLElement {
  const root = el("div", "compare-strip");
  for (const spec of panels) {
    const fig = el("figure", "compare-panel stale");
    if (spec.url) {
      const img = el("img", "compare-image");
      const settle = () => fig.classList.remove("stale");
      img.addEventListener("load", settle);
      img.addEventListener("error", settle);
      img.src = spec.url;
      fig.appendChild(img);
    } else {
      fig.appendChild(el("div", "placeholder", "nothing to show"));
      fig.classList.remove("stale");
    }
    fig.appendChild(el("figcaption", undefined, spec.caption));
    root.appendChild(fig);
  }
  return root;
}

// -- spreadsheet ----------------------------------------------------------------

// Ranked table exactly as delivered: column order and row order are the
// server's, never re-sorted here.
export function spreadsheet(payload: TablePayload | null): HTMLElement {
  const root = el("div", "spreadsheet");
  if (!payload || payload.columns.length === 0) {
    root.appendChild(el("p", "placeholder", "no table output"));
    return root;
  }
  const table = el("table", "spreadsheet-table");
  const head = el("tr");
  for (const col of payload.columns) {
    head.appendChild(el("th", undefined, col.name));
  }
  table.appendChild(head);
  const nRows = payload.columns[0].values.length;
  for (let i = 0; i < nRows; i++) {
    const tr = el("tr");
    for (const col of payload.columns) {
      tr.appendChild(el("td", undefined, String(col.values[i])));
    }
    table.appendChild(tr);
  }
  root.appendChild(table);
  return root;
}

// -- jobs -----------------------------------------------------------------------

export function jobList(jobs: JobInfo[]): HTMLElement {
  const root = el("div", "job-list");
  for (const job of jobs) {
    const row = el("div", `job-row job-${job.status}`);
    row.appendChild(el("span", "job-id", `${job.id} (${job.kind})`));
    row.appendChild(el("span", "job-status", job.status));
    const bar = el("progress", "job-progress") as HTMLProgressElement;
    bar.max = 1;
    bar.value = job.progress;
    row.appendChild(bar);
    if (job.error) row.appendChild(el("span", "job-error", job.error));
    root.appendChild(row);
  }
  return root;
}
