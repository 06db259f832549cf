/**
 * Single-page questionnaire flow: pick a model, answer one question at a
 * time, read the final risk card. The client holds no truth beyond the
 * session id — every rendered prompt and the whole history come from server
 * responses, and a refresh restores the view from the session snapshot.
 */

import {
  ApiError,
  HistoryEntry,
  ModelInfo,
  Prediction,
  Question,
  StepResponse,
  SurveyApi,
} from './api.js';

export interface UiSessionView {
  sessionId: string;
  modelId: string;
  /** exactly one of question/result is set */
  question: Question | null;
  result: Prediction | null;
  history: HistoryEntry[];
}

type Screen =
  | { kind: 'models'; models: ModelInfo[] }
  | { kind: 'survey'; view: UiSessionView }
  | { kind: 'error'; message: string; retry: () => void };

const SESSION_KEY = 'surveyq.session';

export class SurveyApp {
  private screen: Screen = { kind: 'models', models: [] };
  private busy = false;

  constructor(
    private readonly api: SurveyApi,
    private readonly root: HTMLElement,
    private readonly storage: Storage = window.sessionStorage,
  ) {}

  /** Entry point: restore a live session if one is stored, else list models. */
  async start(): Promise<void> {
    const sessionId = this.storage.getItem(SESSION_KEY);
    if (sessionId) {
      try {
        await this.restore(sessionId);
        return;
      } catch {
        this.storage.removeItem(SESSION_KEY); // expired or gone; start over
      }
    }
    await this.showModels();
  }

  get view(): UiSessionView | null {
    return this.screen.kind === 'survey' ? this.screen.view : null;
  }

  async showModels(): Promise<void> {
    await this.guard(async () => {
      const models = await this.api.listModels();
      this.screen = { kind: 'models', models };
    }, () => this.showModels());
  }

  async startSurvey(modelId: string): Promise<void> {
    await this.guard(async () => {
      const created = await this.api.createSession(modelId);
      this.storage.setItem(SESSION_KEY, created.session_id);
      const view: UiSessionView = {
        sessionId: created.session_id,
        modelId,
        question: created.question ?? null,
        result: created.prediction ?? null,
        history: [],
      };
      this.screen = { kind: 'survey', view };
    }, () => this.startSurvey(modelId));
  }

  /**
   * Submit the tapped choice. No-ops when idle-less (request in flight), when
   * there is no open question, or when the index is outside the offered
   * choices — an invalid index is never sent to the server.
   */
  async answer(choice: number): Promise<void> {
    if (this.screen.kind !== 'survey' || this.busy) return;
    const view = this.screen.view;
    const question = view.question;
    if (!question) return;
    if (!Number.isInteger(choice) || choice < 0 || choice >= question.choices.length) {
      return;
    }
    await this.guard(async () => {
      const step: StepResponse = await this.api.submitAnswer(view.sessionId, choice);
      view.history.push({
        feature: question.feature,
        feature_index: question.feature_index,
        prompt: question.prompt,
        choice,
        choice_label: question.choices[choice] ?? String(choice),
      });
      view.question = step.question ?? null;
      view.result = step.prediction ?? null;
      this.screen = { kind: 'survey', view };
    }, () => this.answer(choice));
  }

  /** Rebuild the view from the server snapshot (page refresh / back). */
  async restore(sessionId: string): Promise<void> {
    const snapshot = await this.api.getSession(sessionId);
    const view: UiSessionView = {
      sessionId: snapshot.session_id,
      modelId: snapshot.model_id,
      question: snapshot.question ?? null,
      result: snapshot.prediction ?? null,
      history: snapshot.history,
    };
    this.screen = { kind: 'survey', view };
    this.render();
  }

  async restart(): Promise<void> {
    this.storage.removeItem(SESSION_KEY);
    await this.showModels();
  }

  /** Run an API call with the single-in-flight guard and error screen. */
  private async guard(action: () => Promise<void>, retry: () => void): Promise<void> {
    this.busy = true;
    this.render();
    try {
      await action();
    } catch (err) {
      const message = err instanceof ApiError ? err.message : String(err);
      this.screen = { kind: 'error', message, retry };
    } finally {
      this.busy = false;
      this.render();
    }
  }

  // ------------------------------------------------------------------
  // rendering
  // ------------------------------------------------------------------

  render(): void {
    this.root.replaceChildren();
    switch (this.screen.kind) {
      case 'models':
        this.root.appendChild(this.renderModels(this.screen.models));
        break;
      case 'survey':
        this.root.appendChild(this.renderSurvey(this.screen.view));
        break;
      case 'error':
        this.root.appendChild(this.renderError(this.screen.message, this.screen.retry));
        break;
    }
  }

  private renderModels(models: ModelInfo[]): HTMLElement {
    const section = el('section', 'screen models-screen');
    section.appendChild(el('h1', 'title', 'Risk questionnaire'));
    section.appendChild(
      el('p', 'subtitle', 'Answer a few questions and get an instant risk estimate.'),
    );
    if (models.length === 0 && !this.busy) {
      section.appendChild(el('p', 'empty', 'No models available.'));
    }
    const list = el('div', 'model-list');
    list.setAttribute('role', 'list');
    for (const model of models) {
      const button = el(
        'button',
        'model-button',
        `${model.model_id} — up to ${model.kmax} questions`,
      ) as HTMLButtonElement;
      button.type = 'button';
      button.disabled = this.busy;
      button.dataset.modelId = model.model_id;
      button.addEventListener('click', () => void this.startSurvey(model.model_id));
      list.appendChild(button);
    }
    section.appendChild(list);
    return section;
  }

  private renderSurvey(view: UiSessionView): HTMLElement {
    const section = el('section', 'screen survey-screen');
    section.appendChild(this.renderHistory(view.history));
    if (view.result) {
      section.appendChild(this.renderResult(view.result));
    } else if (view.question) {
      section.appendChild(this.renderQuestion(view.question, view.history.length));
    }
    return section;
  }

  private renderHistory(history: HistoryEntry[]): HTMLElement {
    const list = el('ol', 'history');
    list.setAttribute('aria-label', 'Your answers so far');
    for (const entry of history) {
      const item = el('li', 'history-entry');
      item.appendChild(el('span', 'history-prompt', entry.prompt));
      item.appendChild(el('span', 'history-answer', entry.choice_label));
      list.appendChild(item);
    }
    return list;
  }

  private renderQuestion(question: Question, asked: number): HTMLElement {
    const card = el('div', 'card question-card');
    card.appendChild(el('p', 'progress', `Question ${asked + 1}`));
    const prompt = el('h2', 'prompt', question.prompt);
    prompt.id = 'question-prompt';
    card.appendChild(prompt);
    const choices = el('div', 'choices');
    choices.setAttribute('role', 'group');
    choices.setAttribute('aria-labelledby', 'question-prompt');
    question.choices.forEach((label, index) => {
      const button = el('button', 'choice-button', label) as HTMLButtonElement;
      button.type = 'button';
      button.dataset.choice = String(index);
      button.disabled = this.busy;
      button.addEventListener('click', () => void this.answer(index));
      choices.appendChild(button);
    });
    card.appendChild(choices);
    return card;
  }

  private renderResult(result: Prediction): HTMLElement {
    const card = el('div', `card result-card result-${result.label.replace(/\s+/g, '-')}`);
    card.setAttribute('role', 'status');
    card.appendChild(el('h2', 'result-label', `Result: likely ${result.label}`));
    card.appendChild(
      el(
        'p',
        'result-detail',
        result.label === 'positive'
          ? 'This screening suggests elevated risk — please seek testing.'
          : 'This screening suggests low risk.',
      ),
    );
    card.appendChild(
      el('p', 'result-queries', `Based on ${result.queries_used} answer(s).`),
    );
    const restart = el('button', 'restart-button', 'Start over') as HTMLButtonElement;
    restart.type = 'button';
    restart.addEventListener('click', () => void this.restart());
    card.appendChild(restart);
    return card;
  }

  private renderError(message: string, retry: () => void): HTMLElement {
    const card = el('div', 'card error-card');
    card.setAttribute('role', 'alert');
    card.appendChild(el('h2', 'error-title', 'Something went wrong'));
    card.appendChild(el('p', 'error-message', message));
    const button = el('button', 'retry-button', 'Retry') as HTMLButtonElement;
    button.type = 'button';
    button.addEventListener('click', () => retry());
    card.appendChild(button);
    return card;
  }
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}
