// Group dataset ids into time series for the snapshot scrubber. Snapshot
// files follow the simulator's naming convention <stem>_t<time>; anything
// that does not parse stays a standalone single-entry series.

import type { DatasetMeta } from "./api.js";

export interface Snapshot {
  id: string;
  time: number;
}

export interface Series {
  name: string;
  snapshots: Snapshot[];
}

const TIME_SUFFIX = /^(.*)_t(\d+(?:\.\d+)?)$/;

export function groupSeries(datasets: DatasetMeta[]): Series[] {
  const groups = new Map<string, Snapshot[]>();
  for (const d of datasets) {
    const m = TIME_SUFFIX.exec(d.id);
    if (m) {
      const stem = m[1];
      if (!groups.has(stem)) groups.set(stem, []);
      groups.get(stem)!.push({ id: d.id, time: Number(m[2]) });
    } else {
      groups.set(d.id, [{ id: d.id, time: 0 }]);
    }
  }
  const series: Series[] = [];
  for (const [name, snapshots] of groups) {
    snapshots.sort((a, b) => a.time - b.time);
    series.push({ name, snapshots });
  }
  series.sort((a, b) => a.name.localeCompare(b.name));
  return series;
}
