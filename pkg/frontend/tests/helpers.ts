/** Test harness: spawn a real grading service, seed it through the CLI and
 * API, and build a DOM for the page modules to render into. */

import { execFile, spawn, ChildProcess } from "node:child_process";
import { mkdtemp, writeFile, mkdir, readFile } from "node:fs/promises";
import net from "node:net";
import os from "node:os";
import path from "node:path";
import { promisify } from "node:util";

import { JSDOM } from "jsdom";

const execFileAsync = promisify(execFile);

export const PYTHON = process.env.GRADEFORGE_PYTHON ?? "python3";

export interface LiveService {
  baseUrl: string;
  dataDir: string;
  stop: () => Promise<void>;
}

export function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const server = net.createServer();
    server.listen(0, "127.0.0.1", () => {
      const address = server.address();
      if (address && typeof address === "object") {
        const port = address.port;
        server.close(() => resolve(port));
      } else {
        server.close(() => reject(new Error("no port assigned")));
      }
    });
  });
}

export async function startService(): Promise<LiveService> {
  const port = await freePort();
  const dataDir = await mkdtemp(path.join(os.tmpdir(), "gradeforge-ui-test-"));
  const child: ChildProcess = spawn(
    PYTHON,
    [
      "-m",
      "gradeforge.cli",
      "serve",
      "--bind",
      `127.0.0.1:${port}`,
      "--data-dir",
      path.join(dataDir, "data"),
      "--workers",
      "2",
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  const baseUrl = `http://127.0.0.1:${port}`;

  const deadline = Date.now() + 20_000;
  for (;;) {
    try {
      const response = await fetch(`${baseUrl}/healthz`);
      if (response.ok) {
        break;
      }
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      child.kill("SIGKILL");
      throw new Error("service did not come up within 20s");
    }
    await sleep(200);
  }

  return {
    baseUrl,
    dataDir,
    stop: () =>
      new Promise<void>((resolve) => {
        child.once("exit", () => resolve());
        child.kill("SIGTERM");
        setTimeout(() => child.kill("SIGKILL"), 3000).unref();
      }),
  };
}

export function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export async function cli(baseUrl: string, args: string[]): Promise<string> {
  const { stdout } = await execFileAsync(
    PYTHON,
    ["-m", "gradeforge.cli", "--server", baseUrl, ...args],
    { maxBuffer: 16 * 1024 * 1024 },
  );
  return stdout;
}

/** First JSON object in CLI stdout (commands print JSON then extra lines). */
export function firstJson(stdout: string): any {
  const start = stdout.indexOf("{");
  const end = stdout.lastIndexOf("}");
  return JSON.parse(stdout.slice(start, end + 1));
}

export async function pythonExpr(expr: string): Promise<string> {
  const { stdout } = await execFileAsync(PYTHON, ["-c", expr]);
  return stdout.trim();
}

export async function irisFixtureDir(): Promise<string> {
  return pythonExpr("from gradeforge.fixtures import iris_fixture_dir; print(iris_fixture_dir())");
}

export interface SeededAssignment {
  classroomId: string;
  assignmentId: string;
}

export async function seedClassroom(baseUrl: string, students: string[]): Promise<string> {
  const room = firstJson(
    await cli(baseUrl, ["classroom", "create", "--name", "UI Lab", "--instructor", "prof:Prof"]),
  );
  const rosterPath = path.join(os.tmpdir(), `roster-${Date.now()}-${Math.random()}.csv`);
  await writeFile(rosterPath, "id,name\n" + students.map((s) => `${s},${s}`).join("\n") + "\n");
  await cli(baseUrl, ["classroom", "roster-import", "--classroom", room.id, rosterPath]);
  return room.id;
}

export async function seedIrisAssignment(
  baseUrl: string,
  students: string[],
): Promise<SeededAssignment> {
  const classroomId = await seedClassroom(baseUrl, students);
  const fixture = await irisFixtureDir();
  const assignment = firstJson(
    await cli(baseUrl, [
      "assignment",
      "create",
      "--classroom",
      classroomId,
      "--title",
      "Iris Assessment",
      "--template",
      path.join(fixture, "template"),
      "--spec",
      path.join(fixture, "autograde.spec"),
      "--deadline",
      "+2h",
    ]),
  );
  return { classroomId, assignmentId: assignment.id };
}

const MINI_SUITE = JSON.stringify({
  tests: [
    { name: "first", run: "cat answer.txt", output: "42", points: 12 },
    { name: "second", run: "cat other.txt", output: "ok", points: 13 },
  ],
});

export async function seedMiniAssignment(
  baseUrl: string,
  students: string[],
): Promise<SeededAssignment> {
  const classroomId = await seedClassroom(baseUrl, students);
  const templateDir = await mkdtemp(path.join(os.tmpdir(), "mini-template-"));
  await mkdir(templateDir, { recursive: true });
  await writeFile(path.join(templateDir, "readme.md"), "# mini\n");
  await writeFile(path.join(templateDir, "answer.txt"), "edit me\n");
  await writeFile(path.join(templateDir, "other.txt"), "ok\n");
  const specPath = path.join(templateDir, "..", `mini-spec-${Date.now()}.json`);
  await writeFile(specPath, MINI_SUITE);
  const assignment = firstJson(
    await cli(baseUrl, [
      "assignment",
      "create",
      "--classroom",
      classroomId,
      "--title",
      "Mini",
      "--template",
      templateDir,
      "--spec",
      specPath,
      "--deadline",
      "+2h",
    ]),
  );
  return { classroomId, assignmentId: assignment.id };
}

export async function fixtureSolution(name: string): Promise<string> {
  const fixture = await irisFixtureDir();
  return readFile(path.join(fixture, "solution", name), "utf-8");
}

export interface DomHarness {
  dom: JSDOM;
  root: HTMLElement;
  storage: Storage;
  close: () => void;
}

export function makeDom(): DomHarness {
  const dom = new JSDOM('<!doctype html><html><body><div id="root"></div></body></html>', {
    url: "http://localhost/ui/",
  });
  const root = dom.window.document.getElementById("root") as HTMLElement;
  return {
    dom,
    root,
    storage: dom.window.localStorage,
    close: () => dom.window.close(),
  };
}

export function setTextarea(dom: JSDOM, area: HTMLTextAreaElement, value: string): void {
  area.value = value;
  area.dispatchEvent(new dom.window.Event("input", { bubbles: true }));
}
