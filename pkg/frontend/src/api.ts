// Typed client for the prediction service. The shapes here mirror the JSON
// the service emits; the UI never reshapes the numbers, it only formats them.

export interface ClassificationPrediction {
  task: string;
  model: string;
  type: "classification";
  predicted_class: string;
  distribution: Record<string, number>;
}

export interface RegressionPrediction {
  task: string;
  model: string;
  type: "regression";
  value_transformed: number;
  value: number;
}

export type Prediction = ClassificationPrediction | RegressionPrediction;

export interface SyntacticProfile {
  n_chars: number;
  n_words: number;
  n_functions: number;
  n_joins: number;
  n_unique_tables: number;
  n_selected_columns: number;
  n_predicates: number;
  n_predicate_table_names: number;
  nestedness_level: number;
  nested_aggregation: boolean;
  parse_failed: boolean;
}

export interface PredictResponse {
  statement: string;
  predictions: Record<string, Prediction>;
  profile?: SyntacticProfile;
}

export interface ModelInfo {
  task: string;
  model: string;
  task_type: string;
  vocabulary_size: number;
  parameter_count: number;
}

export async function postPredict(
  baseUrl: string,
  statement: string,
  signal?: AbortSignal,
): Promise<PredictResponse> {
  const resp = await fetch(`${baseUrl}/predict`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ statement }),
    signal,
  });
  if (!resp.ok) {
    let message = `predict failed (${resp.status})`;
    try {
      const body = await resp.json();
      if (body && typeof body.error === "string") message = body.error;
    } catch {
      // non-JSON error body; keep the status message
    }
    throw new Error(message);
  }
  return resp.json();
}

export async function getModels(baseUrl: string): Promise<ModelInfo[]> {
  const resp = await fetch(`${baseUrl}/models`);
  if (!resp.ok) throw new Error(`models failed (${resp.status})`);
  const body = await resp.json();
  return body.models ?? [];
}
