// Pure view-model: turns one /predict response into everything the panel
// shows. All numbers pass through verbatim from the response; the only
// processing here is unit formatting and the warning rules.

import type { PredictResponse, Prediction, SyntacticProfile } from "./api.js";

export interface ViewOptions {
  /** Predicted CPU seconds above which the panel shows a warning. */
  cpuWarnThresholdS: number;
}

export const DEFAULT_OPTIONS: ViewOptions = { cpuWarnThresholdS: 60 };

export interface PredictionView {
  statement: string;
  latencyMs: number;
  predictions: Record<string, Prediction>;
  profile?: SyntacticProfile;
  /** errorWarning: the error model's argmax is severe or non_severe. */
  errorWarning: boolean;
  /** cpuWarning: predicted CPU seconds exceed the configured threshold. */
  cpuWarning: boolean;
  warnings: string[];
}

export function buildView(
  response: PredictResponse,
  latencyMs: number,
  options: ViewOptions = DEFAULT_OPTIONS,
): PredictionView {
  const warnings: string[] = [];

  const error = response.predictions["error"];
  let errorWarning = false;
  if (error && error.type === "classification") {
    if (error.predicted_class === "severe" || error.predicted_class === "non_severe") {
      errorWarning = true;
      warnings.push(`predicted error class: ${error.predicted_class}`);
    }
  }

  const cpu = response.predictions["cpu"];
  let cpuWarning = false;
  if (cpu && cpu.type === "regression" && cpu.value > options.cpuWarnThresholdS) {
    cpuWarning = true;
    warnings.push(`predicted CPU time ${formatSeconds(cpu.value)} exceeds ${formatSeconds(options.cpuWarnThresholdS)}`);
  }

  return {
    statement: response.statement,
    latencyMs,
    predictions: response.predictions,
    profile: response.profile,
    errorWarning,
    cpuWarning,
    warnings,
  };
}

/** Distribution entries sorted for a bar chart: largest share first. */
export function distributionBars(
  distribution: Record<string, number>,
): Array<{ label: string; share: number }> {
  return Object.entries(distribution)
    .map(([label, share]) => ({ label, share }))
    .sort((a, b) => b.share - a.share || a.label.localeCompare(b.label));
}

export function formatSeconds(s: number): string {
  if (!Number.isFinite(s)) return String(s);
  if (s < 0.001) return `${(s * 1000).toFixed(2)} ms`;
  if (s < 1) return `${(s * 1000).toFixed(0)} ms`;
  if (s < 120) return `${s.toFixed(2)} s`;
  return `${(s / 60).toFixed(1)} min`;
}

export function formatRows(rows: number): string {
  if (!Number.isFinite(rows)) return String(rows);
  if (rows < 0) return "n/a";
  if (rows < 1000) return rows.toFixed(rows < 10 ? 1 : 0);
  return Math.round(rows).toLocaleString("en-US");
}

export function formatShare(share: number): string {
  return `${(share * 100).toFixed(1)}%`;
}

/** The profile table rows, in the service's field order. */
export function profileRows(
  profile: SyntacticProfile,
): Array<{ name: string; value: string }> {
  const fields: Array<keyof SyntacticProfile> = [
    "n_chars", "n_words", "n_functions", "n_joins", "n_unique_tables",
    "n_selected_columns", "n_predicates", "n_predicate_table_names",
    "nestedness_level", "nested_aggregation",
  ];
  return fields.map((name) => ({
    name: String(name),
    value: String(profile[name]),
  }));
}
