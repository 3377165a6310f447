/** Page bootstrap: tab switching, API key handling, assignment listing. */

import { ApiClient } from "./api.js";
import { Dashboard } from "./dashboard.js";
import { StudentPage } from "./student.js";

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function currentApiKey(): string | null {
  return window.localStorage.getItem("gradeforge-api-key");
}

async function populateAssignmentList(api: ApiClient): Promise<void> {
  const list = byId<HTMLElement>("assignment-list");
  try {
    const config = await api.uiConfig();
    list.innerHTML = "";
    for (const assignment of config.assignments) {
      const item = document.createElement("li");
      const code = document.createElement("code");
      code.textContent = assignment.id;
      item.append(
        document.createTextNode(`${assignment.title} (${assignment.max_points} pts, due ${assignment.deadline}) - `),
        code,
      );
      list.append(item);
    }
  } catch (err) {
    list.textContent = `could not list assignments: ${(err as Error).message}`;
  }
}

function promptForKey(api: ApiClient): void {
  const key = window.prompt("This service requires an API key:");
  if (key) {
    window.localStorage.setItem("gradeforge-api-key", key);
    api.apiKey = key;
  }
}

function showTab(name: "student" | "dashboard"): void {
  byId("student-root").classList.toggle("hidden", name !== "student");
  byId("dashboard-root").classList.toggle("hidden", name !== "dashboard");
  byId("tab-student").classList.toggle("active", name === "student");
  byId("tab-dashboard").classList.toggle("active", name === "dashboard");
}

document.addEventListener("DOMContentLoaded", () => {
  const api = new ApiClient("", currentApiKey());
  new StudentPage({ api, root: byId("student-root"), storage: window.localStorage });
  new Dashboard({
    api,
    root: byId("dashboard-root"),
    onAuthRequired: () => promptForKey(api),
  });

  byId("tab-student").addEventListener("click", () => showTab("student"));
  byId("tab-dashboard").addEventListener("click", () => showTab("dashboard"));
  showTab(window.location.hash === "#dashboard" ? "dashboard" : "student");

  void populateAssignmentList(api);
});
