// Wires the editor, the debounced fetch loop, and the feedback panel.

import { getModels, postPredict } from "./api.js";
import { debounce } from "./debounce.js";
import { RequestSequencer } from "./sequencer.js";
import {
  DEFAULT_OPTIONS,
  PredictionView,
  buildView,
  distributionBars,
  formatRows,
  formatSeconds,
  formatShare,
  profileRows,
} from "./view.js";

const BASE_URL = ""; // same origin: the core service serves this page

const editor = document.getElementById("editor") as HTMLTextAreaElement;
const panel = document.getElementById("panel") as HTMLElement;
const banner = document.getElementById("banner") as HTMLElement;
const modelsLine = document.getElementById("models") as HTMLElement;

const sequencer = new RequestSequencer();
let lastGood: PredictionView | undefined;

function setBanner(message: string | undefined): void {
  banner.textContent = message ?? "";
  banner.hidden = message === undefined;
}

function taskCard(title: string, body: string, warn = false): string {
  return `<section class="card${warn ? " warn" : ""}"><h2>${title}</h2>${body}</section>`;
}

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function render(view: PredictionView): void {
  const parts: string[] = [];

  if (view.warnings.length > 0) {
    parts.push(
      `<div class="warnings">${view.warnings.map((w) => `⚠ ${esc(w)}`).join("<br>")}</div>`,
    );
  }

  const error = view.predictions["error"];
  if (error && error.type === "classification") {
    const bars = distributionBars(error.distribution)
      .map(
        (b) => `
        <div class="bar-row">
          <span class="bar-label">${esc(b.label)}</span>
          <span class="bar-track"><span class="bar-fill" style="width:${(b.share * 100).toFixed(1)}%"></span></span>
          <span class="bar-value">${formatShare(b.share)}</span>
        </div>`,
      )
      .join("");
    parts.push(taskCard("Error class", bars, view.errorWarning));
  }

  const cpu = view.predictions["cpu"];
  if (cpu && cpu.type === "regression") {
    parts.push(
      taskCard("CPU time", `<p class="big">${formatSeconds(cpu.value)}</p>`, view.cpuWarning),
    );
  }

  const rows = view.predictions["rows"];
  if (rows && rows.type === "regression") {
    parts.push(taskCard("Answer size", `<p class="big">${formatRows(rows.value)} rows</p>`));
  }

  const session = view.predictions["session"];
  if (session && session.type === "classification") {
    parts.push(taskCard("Session class", `<p class="big">${esc(session.predicted_class)}</p>`));
  }

  if (view.profile) {
    const rows_ = profileRows(view.profile)
      .map((r) => `<tr><td>${esc(r.name)}</td><td>${esc(r.value)}</td></tr>`)
      .join("");
    parts.push(taskCard("Syntactic profile", `<table>${rows_}</table>`));
  }

  parts.push(`<p class="latency">answered in ${view.latencyMs.toFixed(0)} ms</p>`);
  panel.innerHTML = parts.join("\n");
}

async function refresh(statement: string): Promise<void> {
  if (statement.trim() === "") {
    sequencer.invalidate();
    panel.innerHTML = '<p class="hint">Start typing a query to see predictions.</p>';
    setBanner(undefined);
    return;
  }
  const { id, signal } = sequencer.begin();
  const started = performance.now();
  try {
    const response = await postPredict(BASE_URL, statement, signal);
    if (!sequencer.isCurrent(id)) return; // superseded while in flight
    lastGood = buildView(response, performance.now() - started, DEFAULT_OPTIONS);
    setBanner(undefined);
    render(lastGood);
  } catch (err) {
    if (signal.aborted || !sequencer.isCurrent(id)) return;
    setBanner(err instanceof Error ? err.message : "prediction request failed");
    if (lastGood) render(lastGood); // keep the last good view under the banner
  }
}

const scheduleRefresh = debounce((statement: string) => {
  void refresh(statement);
}, 400);

editor.addEventListener("input", () => scheduleRefresh(editor.value));

void getModels(BASE_URL)
  .then((models) => {
    const tasks = models.map((m) => `${m.task} (${m.model})`).join(", ");
    modelsLine.textContent = models.length > 0 ? `models: ${tasks}` : "no models loaded";
  })
  .catch(() => {
    modelsLine.textContent = "service unreachable";
  });
