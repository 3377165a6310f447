/** Typed client for the grading service HTTP API.
 *
 * Every number the UI displays comes from these responses verbatim; the
 * pages do no grading arithmetic of their own.
 */

export interface LanguageInfo {
  id: string;
  display_name: string;
  extension: string;
  compiled: boolean;
}

export interface AssignmentInfo {
  id: string;
  classroom_id: string;
  title: string;
  deadline: string;
  mode: string;
  team_size: number | null;
  visibility: string;
  late_policy: string;
  score_policy: string;
  variant_count: number;
  max_points: number;
  readme: string;
}

export interface UiConfig {
  server_time: string;
  version: string;
  assignments: AssignmentInfo[];
}

export interface WorkspaceInfo {
  id: string;
  assignment_id: string;
  owner: string;
  members: string[];
  variant_index: number;
  created_at: string;
  files: Record<string, string>;
}

export interface TestResultRow {
  test_name: string;
  status: "passed" | "failed" | "error" | "timeout";
  points_earned: number;
  actual_stdout: string;
  actual_stderr: string;
  duration_ms: number;
  diagnostic: string;
  grader_fault: boolean;
  expected_output?: string | null;
  comparison?: string;
  max_points?: number;
}

export interface GradeReport {
  results: TestResultRow[];
  earned: number;
  max: number;
  all_passed: boolean;
}

export interface JobInfo {
  job_id: string;
  state: "queued" | "running" | "done" | "failed";
  submission_id: string | null;
  report: GradeReport | null;
  error: string | null;
}

export interface StatusRow {
  owner: string;
  accepted: boolean;
  submitted: boolean;
  passed: boolean;
  points: number;
  last_submission_at: string | null;
}

export interface SubmitAccepted {
  submission_id: string;
  job_id: string;
}

export class ApiError extends Error {
  status: number;
  code: string;
  retryAfterSeconds: number | null;

  constructor(status: number, code: string, message: string, retryAfterSeconds: number | null = null) {
    super(message);
    this.status = status;
    this.code = code;
    this.retryAfterSeconds = retryAfterSeconds;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  baseUrl: string;
  apiKey: string | null;
  private fetchImpl: FetchLike;

  constructor(baseUrl = "", apiKey: string | null = null, fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.apiKey = apiKey;
    const chosen = fetchImpl ?? globalThis.fetch;
    this.fetchImpl = (input, init) => chosen(input, init);
  }

  private headers(extra: Record<string, string> = {}): Record<string, string> {
    const headers: Record<string, string> = { ...extra };
    if (this.apiKey) {
      headers["X-Api-Key"] = this.apiKey;
    }
    return headers;
  }

  private async request<T>(method: string, path: string, init: RequestInit = {}): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      ...init,
      headers: this.headers((init.headers as Record<string, string>) ?? {}),
    });
    const text = await response.text();
    if (!response.ok) {
      let code = "error";
      let message = text || `HTTP ${response.status}`;
      try {
        const parsed = JSON.parse(text);
        if (parsed && parsed.error) {
          code = parsed.error.code ?? code;
          message = parsed.error.message ?? message;
        }
      } catch {
        // non-JSON error body; keep raw text
      }
      const retryAfter = response.headers.get("Retry-After");
      throw new ApiError(
        response.status,
        code,
        message,
        retryAfter ? Number(retryAfter) : null,
      );
    }
    return JSON.parse(text) as T;
  }

  uiConfig(): Promise<UiConfig> {
    return this.request("GET", "/api/v1/ui-config");
  }

  languages(): Promise<LanguageInfo[]> {
    return this.request("GET", "/api/v1/languages");
  }

  accept(assignmentId: string, owner: string, members?: string[]): Promise<WorkspaceInfo> {
    const body: Record<string, unknown> = { owner };
    if (members && members.length) {
      body.members = members;
    }
    return this.request("POST", `/api/v1/assignments/${assignmentId}/accept`, {
      body: JSON.stringify(body),
      headers: { "Content-Type": "application/json" },
    });
  }

  submit(
    assignmentId: string,
    workspaceId: string,
    submitter: string,
    files: Record<string, string>,
  ): Promise<SubmitAccepted> {
    const form = new FormData();
    form.append("workspace_id", workspaceId);
    form.append("submitter", submitter);
    for (const [name, content] of Object.entries(files)) {
      form.append("file", new Blob([content], { type: "application/octet-stream" }), name);
    }
    return this.request("POST", `/api/v1/assignments/${assignmentId}/submissions`, {
      body: form,
    });
  }

  job(jobId: string): Promise<JobInfo> {
    return this.request("GET", `/api/v1/jobs/${jobId}`);
  }

  status(assignmentId: string): Promise<StatusRow[]> {
    return this.request("GET", `/api/v1/assignments/${assignmentId}/status`);
  }

  gradesCsvUrl(assignmentId: string): string {
    return `${this.baseUrl}/api/v1/assignments/${assignmentId}/grades.csv`;
  }

  similarityUrl(assignmentId: string): string {
    return `${this.baseUrl}/api/v1/assignments/${assignmentId}/similarity`;
  }

  /** Poll a job until it reaches done or failed. */
  async pollJob(jobId: string, intervalMs = 500, timeoutMs = 180_000): Promise<JobInfo> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const job = await this.job(jobId);
      if (job.state === "done" || job.state === "failed") {
        return job;
      }
      if (Date.now() > deadline) {
        throw new ApiError(504, "poll_timeout", `job ${jobId} still ${job.state}`);
      }
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }
}

/** Display-side twin of the grader's output normalization (trailing
 * whitespace per line, trailing newlines); used only to render the
 * expected-vs-actual excerpt, never to decide pass/fail. */
export function normalizeForDisplay(text: string): string {
  return text
    .split("\n")
    .map((line) => line.replace(/[ \t\r]+$/, ""))
    .join("\n")
    .replace(/\n+$/, "");
}
