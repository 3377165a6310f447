/** Student check page: open a workspace, edit files, submit, watch results.
 *
 * Flow: enter assignment + owner, "Open workspace" claims (or re-opens) the
 * workspace via the idempotent accept endpoint and fills one textarea per
 * file.  "Check" uploads the editors as a submission, polls the grading job
 * and renders one row per test; failed rows show the expected value next to
 * the (normalized) actual output.  Edits are mirrored to browser storage so
 * a lost connection or queue-full retry never destroys work.
 */

import {
  ApiClient,
  ApiError,
  GradeReport,
  JobInfo,
  TestResultRow,
  WorkspaceInfo,
  normalizeForDisplay,
} from "./api.js";

export interface StudentPageOptions {
  api: ApiClient;
  root: HTMLElement;
  storage?: Storage | null;
  pollIntervalMs?: number;
}

const STATUS_LABELS: Record<string, string> = {
  passed: "passed",
  failed: "failed",
  error: "error",
  timeout: "timeout",
};

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export class StudentPage {
  private api: ApiClient;
  private root: HTMLElement;
  private doc: Document;
  private storage: Storage | null;
  private pollIntervalMs: number;

  workspace: WorkspaceInfo | null = null;
  checkInFlight = false;
  lastReport: GradeReport | null = null;

  private editors = new Map<string, HTMLTextAreaElement>();

  constructor(options: StudentPageOptions) {
    this.api = options.api;
    this.root = options.root;
    this.doc = options.root.ownerDocument;
    this.storage = options.storage ?? null;
    this.pollIntervalMs = options.pollIntervalMs ?? 500;
    this.renderShell();
  }

  // -- DOM scaffolding ----------------------------------------------------

  private renderShell(): void {
    this.root.innerHTML = "";
    const form = el(this.doc, "div", "open-form");
    const assignmentInput = el(this.doc, "input");
    assignmentInput.id = "assignment-id";
    assignmentInput.placeholder = "assignment id";
    const ownerInput = el(this.doc, "input");
    ownerInput.id = "owner-id";
    ownerInput.placeholder = "your id";
    const openButton = el(this.doc, "button", "", "Open workspace");
    openButton.id = "open-workspace";
    openButton.addEventListener("click", () => {
      void this.openWorkspace(assignmentInput.value.trim(), ownerInput.value.trim());
    });
    form.append(assignmentInput, ownerInput, openButton);

    const banner = el(this.doc, "div", "banner hidden");
    banner.id = "banner";
    const readme = el(this.doc, "section", "readme");
    readme.id = "readme";
    const editors = el(this.doc, "section", "editors");
    editors.id = "editors";
    const checkButton = el(this.doc, "button", "check", "Check");
    checkButton.id = "check";
    checkButton.disabled = true;
    checkButton.addEventListener("click", () => {
      void this.check();
    });
    const results = el(this.doc, "section", "results");
    results.id = "results";
    this.root.append(form, banner, readme, editors, checkButton, results);
  }

  private banner(): HTMLElement {
    return this.root.querySelector("#banner") as HTMLElement;
  }

  private showBanner(kind: "success" | "error" | "retry", text: string): void {
    const banner = this.banner();
    banner.className = `banner ${kind}`;
    banner.textContent = text;
  }

  private hideBanner(): void {
    this.banner().className = "banner hidden";
    this.banner().textContent = "";
  }

  // -- workspace ------------------------------------------------------------

  private draftKey(): string {
    return `gradeforge-draft-${this.workspace?.id ?? ""}`;
  }

  async openWorkspace(assignmentId: string, owner: string): Promise<void> {
    if (!assignmentId || !owner) {
      this.showBanner("error", "enter an assignment id and your id first");
      return;
    }
    try {
      this.workspace = await this.api.accept(assignmentId, owner);
    } catch (err) {
      this.showBanner("error", `could not open workspace: ${(err as Error).message}`);
      return;
    }
    this.hideBanner();
    this.renderWorkspace();
  }

  private renderWorkspace(): void {
    const ws = this.workspace;
    if (!ws) {
      return;
    }
    const files: Record<string, string> = { ...ws.files };
    const draft = this.loadDraft();
    for (const [name, content] of Object.entries(draft)) {
      if (name in files) {
        files[name] = content;
      }
    }

    const readme = this.root.querySelector("#readme") as HTMLElement;
    readme.innerHTML = "";
    const readmeName = Object.keys(files).find((n) => n.toLowerCase() === "readme.md");
    if (readmeName) {
      readme.append(el(this.doc, "pre", "readme-text", files[readmeName]));
    }

    const editors = this.root.querySelector("#editors") as HTMLElement;
    editors.innerHTML = "";
    this.editors.clear();
    for (const name of Object.keys(files).sort()) {
      if (name === readmeName) {
        continue;
      }
      const wrapper = el(this.doc, "div", "editor");
      wrapper.append(el(this.doc, "h3", "filename", name));
      const area = el(this.doc, "textarea");
      area.value = files[name];
      area.rows = Math.min(20, Math.max(4, files[name].split("\n").length + 1));
      area.dataset.filename = name;
      area.addEventListener("input", () => this.saveDraft());
      wrapper.append(area);
      editors.append(wrapper);
      this.editors.set(name, area);
    }
    (this.root.querySelector("#check") as HTMLButtonElement).disabled = false;
  }

  currentFiles(): Record<string, string> {
    const files: Record<string, string> = {};
    if (this.workspace) {
      for (const [name, content] of Object.entries(this.workspace.files)) {
        files[name] = content;
      }
    }
    for (const [name, area] of this.editors.entries()) {
      files[name] = area.value;
    }
    return files;
  }

  private saveDraft(): void {
    if (!this.storage || !this.workspace) {
      return;
    }
    const draft: Record<string, string> = {};
    for (const [name, area] of this.editors.entries()) {
      draft[name] = area.value;
    }
    try {
      this.storage.setItem(this.draftKey(), JSON.stringify(draft));
    } catch {
      // storage full or unavailable; editing continues unaffected
    }
  }

  private loadDraft(): Record<string, string> {
    if (!this.storage || !this.workspace) {
      return {};
    }
    try {
      const raw = this.storage.getItem(this.draftKey());
      return raw ? (JSON.parse(raw) as Record<string, string>) : {};
    } catch {
      return {};
    }
  }

  // -- check flow ----------------------------------------------------------

  async check(): Promise<JobInfo | null> {
    const ws = this.workspace;
    if (!ws || this.checkInFlight) {
      return null;
    }
    const button = this.root.querySelector("#check") as HTMLButtonElement;
    this.checkInFlight = true;
    button.disabled = true;
    this.showBanner("retry", "checking…");
    try {
      const accepted = await this.api.submit(
        ws.assignment_id,
        ws.id,
        ws.owner,
        this.currentFiles(),
      );
      const job = await this.api.pollJob(accepted.job_id, this.pollIntervalMs);
      if (job.state === "failed" || !job.report) {
        this.showBanner("error", `grading failed: ${job.error ?? "unknown error"}`);
        return job;
      }
      this.lastReport = job.report;
      this.renderReport(job.report);
      return job;
    } catch (err) {
      if (err instanceof ApiError && err.status === 503) {
        const wait = err.retryAfterSeconds ?? 2;
        this.showBanner(
          "retry",
          `the grading queue is full; your edits are safe - retry in ${wait}s`,
        );
      } else {
        this.showBanner(
          "error",
          `could not reach the grader: ${(err as Error).message} - your edits are saved locally`,
        );
      }
      return null;
    } finally {
      this.checkInFlight = false;
      button.disabled = false;
    }
  }

  private renderReport(report: GradeReport): void {
    if (report.all_passed) {
      this.showBanner("success", `✓ all tests passed - ${report.earned}/${report.max}`);
    } else {
      this.showBanner("error", `${report.earned}/${report.max} - keep going`);
    }
    const results = this.root.querySelector("#results") as HTMLElement;
    results.innerHTML = "";
    const table = el(this.doc, "table", "result-table");
    const head = el(this.doc, "tr");
    for (const title of ["test", "status", "points", "detail"]) {
      head.append(el(this.doc, "th", "", title));
    }
    table.append(head);
    for (const row of report.results) {
      table.append(this.resultRow(row));
    }
    results.append(table);
    const total = el(
      this.doc,
      "p",
      "total",
      `total: ${report.earned}/${report.max}`,
    );
    total.id = "total";
    results.append(total);
  }

  private resultRow(row: TestResultRow): HTMLTableRowElement {
    const tr = el(this.doc, "tr", `result ${row.status}`);
    tr.append(el(this.doc, "td", "name", row.test_name));
    const badge = el(this.doc, "td", `badge badge-${row.status}`, STATUS_LABELS[row.status]);
    tr.append(badge);
    tr.append(el(this.doc, "td", "points", String(row.points_earned)));
    const detail = el(this.doc, "td", "detail");
    if (row.status === "passed") {
      detail.textContent = "";
    } else if (row.status === "error" && row.diagnostic) {
      detail.textContent = row.diagnostic;
    } else {
      const expected = row.expected_output;
      if (expected !== null && expected !== undefined) {
        const pair = el(this.doc, "div", "expect-actual");
        const expectedBox = el(this.doc, "div", "expected");
        expectedBox.append(el(this.doc, "span", "label", "expected"));
        expectedBox.append(el(this.doc, "pre", "", expected));
        const actualBox = el(this.doc, "div", "actual");
        actualBox.append(el(this.doc, "span", "label", "actual"));
        actualBox.append(
          el(this.doc, "pre", "", normalizeForDisplay(row.actual_stdout) || "(no output)"),
        );
        pair.append(expectedBox, actualBox);
        detail.append(pair);
      } else if (row.actual_stderr) {
        detail.append(el(this.doc, "pre", "", normalizeForDisplay(row.actual_stderr)));
      }
    }
    tr.append(detail);
    return tr;
  }
}

export function initStudentPage(options: StudentPageOptions): StudentPage {
  return new StudentPage(options);
}
