/** Instructor dashboard: auto-refreshing accepted/submitted/passed table.
 *
 * Counters are column aggregates of the fetched rows and every cell is the
 * API value rendered verbatim; the page never recomputes points.  Refresh
 * keeps the current sort and filter, shows a stale-data timestamp when a
 * fetch fails, and prompts for an API key on 401.
 */

import { ApiClient, ApiError, StatusRow } from "./api.js";

export interface DashboardOptions {
  api: ApiClient;
  root: HTMLElement;
  refreshMs?: number;
  onAuthRequired?: () => void;
}

type SortKey = "owner" | "points" | "last_submission_at";

export class Dashboard {
  private api: ApiClient;
  private root: HTMLElement;
  private doc: Document;
  private refreshMs: number;
  private onAuthRequired?: () => void;

  assignmentId: string | null = null;
  rows: StatusRow[] = [];
  sortKey: SortKey = "owner";
  sortDescending = false;
  filterText = "";
  lastGoodFetch: Date | null = null;

  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(options: DashboardOptions) {
    this.api = options.api;
    this.root = options.root;
    this.doc = options.root.ownerDocument;
    this.refreshMs = options.refreshMs ?? 10_000;
    this.onAuthRequired = options.onAuthRequired;
    this.renderShell();
  }

  private renderShell(): void {
    this.root.innerHTML = "";
    const controls = this.doc.createElement("div");
    controls.className = "dash-controls";

    const assignmentInput = this.doc.createElement("input");
    assignmentInput.id = "dash-assignment";
    assignmentInput.placeholder = "assignment id";
    const loadButton = this.doc.createElement("button");
    loadButton.id = "dash-load";
    loadButton.textContent = "Load";
    loadButton.addEventListener("click", () => {
      void this.load(assignmentInput.value.trim());
    });
    const filterInput = this.doc.createElement("input");
    filterInput.id = "dash-filter";
    filterInput.placeholder = "filter owners";
    filterInput.addEventListener("input", () => {
      this.filterText = filterInput.value.trim().toLowerCase();
      this.renderTable();
    });
    controls.append(assignmentInput, loadButton, filterInput);

    const counters = this.doc.createElement("div");
    counters.className = "counters";
    counters.id = "counters";

    const stale = this.doc.createElement("div");
    stale.className = "stale hidden";
    stale.id = "stale";

    const links = this.doc.createElement("div");
    links.className = "downloads";
    links.id = "downloads";

    const table = this.doc.createElement("div");
    table.id = "status-table";

    this.root.append(controls, counters, stale, links, table);
  }

  async load(assignmentId: string): Promise<void> {
    if (!assignmentId) {
      return;
    }
    this.assignmentId = assignmentId;
    await this.refresh();
    this.startAutoRefresh();
  }

  startAutoRefresh(): void {
    this.stopAutoRefresh();
    this.timer = setInterval(() => {
      void this.refresh();
    }, this.refreshMs);
  }

  stopAutoRefresh(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  async refresh(): Promise<void> {
    if (!this.assignmentId) {
      return;
    }
    try {
      this.rows = await this.api.status(this.assignmentId);
      this.lastGoodFetch = new Date();
      this.hideStale();
    } catch (err) {
      if (err instanceof ApiError && err.status === 401 && this.onAuthRequired) {
        this.onAuthRequired();
        return;
      }
      this.showStale(err as Error);
      return;
    }
    this.renderCounters();
    this.renderDownloads();
    this.renderTable();
  }

  private showStale(err: Error): void {
    const stale = this.root.querySelector("#stale") as HTMLElement;
    stale.className = "stale";
    const asOf = this.lastGoodFetch ? this.lastGoodFetch.toISOString() : "never";
    stale.textContent = `showing data as of ${asOf} - refresh failed: ${err.message}`;
  }

  private hideStale(): void {
    const stale = this.root.querySelector("#stale") as HTMLElement;
    stale.className = "stale hidden";
    stale.textContent = "";
  }

  /** accepted/submitted/passed counts are aggregates of the fetched rows. */
  counters(): { accepted: number; submitted: number; passed: number } {
    return {
      accepted: this.rows.filter((r) => r.accepted).length,
      submitted: this.rows.filter((r) => r.submitted).length,
      passed: this.rows.filter((r) => r.passed).length,
    };
  }

  private renderCounters(): void {
    const { accepted, submitted, passed } = this.counters();
    const counters = this.root.querySelector("#counters") as HTMLElement;
    counters.innerHTML = "";
    for (const [label, value] of [
      ["accepted", accepted],
      ["submitted", submitted],
      ["passed", passed],
    ] as const) {
      const box = this.doc.createElement("span");
      box.className = `counter counter-${label}`;
      const num = this.doc.createElement("strong");
      num.textContent = String(value);
      box.append(num, this.doc.createTextNode(` ${label}`));
      counters.append(box);
    }
  }

  private renderDownloads(): void {
    const links = this.root.querySelector("#downloads") as HTMLElement;
    links.innerHTML = "";
    if (!this.assignmentId) {
      return;
    }
    const grades = this.doc.createElement("a");
    grades.id = "download-grades";
    grades.href = this.api.gradesCsvUrl(this.assignmentId);
    grades.textContent = "grades.csv";
    const similarity = this.doc.createElement("a");
    similarity.id = "download-similarity";
    similarity.href = this.api.similarityUrl(this.assignmentId);
    similarity.textContent = "similarity report";
    links.append(grades, similarity);
  }

  setSort(key: SortKey): void {
    if (this.sortKey === key) {
      this.sortDescending = !this.sortDescending;
    } else {
      this.sortKey = key;
      this.sortDescending = key === "points";
    }
    this.renderTable();
  }

  visibleRows(): StatusRow[] {
    let rows = this.rows;
    if (this.filterText) {
      rows = rows.filter((r) => r.owner.toLowerCase().includes(this.filterText));
    }
    const key = this.sortKey;
    const direction = this.sortDescending ? -1 : 1;
    return [...rows].sort((a, b) => {
      const left = a[key] ?? "";
      const right = b[key] ?? "";
      if (left < right) {
        return -direction;
      }
      if (left > right) {
        return direction;
      }
      return a.owner < b.owner ? -1 : 1;
    });
  }

  private renderTable(): void {
    const host = this.root.querySelector("#status-table") as HTMLElement;
    host.innerHTML = "";
    const table = this.doc.createElement("table");
    table.className = "status";
    const head = this.doc.createElement("tr");
    const columns: [string, SortKey | null][] = [
      ["owner", "owner"],
      ["accepted", null],
      ["submitted", null],
      ["passed", null],
      ["points", "points"],
      ["last submission", "last_submission_at"],
    ];
    for (const [title, key] of columns) {
      const th = this.doc.createElement("th");
      th.textContent = title;
      if (key) {
        th.className = "sortable";
        th.addEventListener("click", () => this.setSort(key));
      }
      head.append(th);
    }
    table.append(head);

    for (const row of this.visibleRows()) {
      const tr = this.doc.createElement("tr");
      tr.className = "status-row";
      const cells = [
        row.owner,
        row.accepted ? "yes" : "no",
        row.submitted ? "yes" : "no",
        row.passed ? "yes" : "no",
        String(row.points),
        row.last_submission_at ?? "",
      ];
      for (const [index, value] of cells.entries()) {
        const td = this.doc.createElement("td");
        td.textContent = value;
        if (index === 3) {
          td.className = row.passed ? "passed-yes" : "passed-no";
        }
        if (index === 4) {
          td.className = "points";
        }
        tr.append(td);
      }
      table.append(tr);
    }
    host.append(table);
  }
}

export function initDashboard(options: DashboardOptions): Dashboard {
  return new Dashboard(options);
}
