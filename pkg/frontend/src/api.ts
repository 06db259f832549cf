/**
 * Typed client for the surveyq session API. All shapes mirror the server's
 * documented JSON bodies; nothing here invents state — the server owns truth.
 */

export interface ModelInfo {
  model_id: string;
  kind: string;
  kmax: number;
  features: string[];
  class_labels: string[];
}

export interface Question {
  feature: string;
  feature_index: number;
  prompt: string;
  choices: string[];
}

export interface Prediction {
  class: number;
  label: string;
  q_values: number[];
  queries_used: number;
}

export interface HistoryEntry {
  feature: string;
  feature_index: number;
  prompt: string;
  choice: number;
  choice_label: string;
}

export type StepResponse =
  | { question: Question; prediction?: undefined }
  | { prediction: Prediction; question?: undefined };

export type CreateResponse = { session_id: string } & StepResponse;

export interface SessionSnapshot {
  session_id: string;
  model_id: string;
  status: 'awaiting-answer' | 'finished';
  queries_used: number;
  history: HistoryEntry[];
  question?: Question;
  prediction?: Prediction;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(url, {
      headers: { 'content-type': 'application/json' },
      ...init,
    });
  } catch (err) {
    throw new ApiError(0, `network failure: ${String(err)}`);
  }
  if (response.status === 204) {
    return undefined as T;
  }
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      /* non-JSON error body; keep the status text */
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class SurveyApi {
  constructor(private readonly baseUrl: string = '') {}

  listModels(): Promise<ModelInfo[]> {
    return request<ModelInfo[]>(`${this.baseUrl}/v1/models`);
  }

  createSession(modelId: string): Promise<CreateResponse> {
    return request<CreateResponse>(`${this.baseUrl}/v1/sessions`, {
      method: 'POST',
      body: JSON.stringify({ model_id: modelId }),
    });
  }

  submitAnswer(sessionId: string, choice: number): Promise<StepResponse> {
    return request<StepResponse>(
      `${this.baseUrl}/v1/sessions/${encodeURIComponent(sessionId)}/answer`,
      { method: 'POST', body: JSON.stringify({ choice }) },
    );
  }

  getSession(sessionId: string): Promise<SessionSnapshot> {
    return request<SessionSnapshot>(
      `${this.baseUrl}/v1/sessions/${encodeURIComponent(sessionId)}`,
    );
  }

  deleteSession(sessionId: string): Promise<void> {
    return request<void>(
      `${this.baseUrl}/v1/sessions/${encodeURIComponent(sessionId)}`,
      { method: 'DELETE' },
    );
  }
}
