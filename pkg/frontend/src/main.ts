// Browser bootstrap: wires the API client, queue state, and renderers into the
// page, with keyboard-first navigation (n: next task, ctrl+s: save,
// ctrl+enter: approve).

import { AuthError, NetworkError, ReviewApiClient, ValidationError } from './api';
import {
  applyPage,
  initialQueue,
  optimisticStatus,
  replaceTask,
  selectNext,
  withBanner,
  type QueueState,
} from './state';
import {
  renderConfirmation,
  renderQueue,
  renderTaskDetail,
} from './render';
import type { SentenceFields, TaskStatus, TaskView } from './types';
import { checkFields, joinSentences, likertComplete, splitIntoFields } from './validation';

interface AppConfig {
  baseUrl: string;
  token: string;
  actorId: string;
}

const CONFIG_KEY = 'vista-review-config';

function loadConfig(): AppConfig | null {
  const raw = localStorage.getItem(CONFIG_KEY);
  if (!raw) return null;
  try {
    return JSON.parse(raw) as AppConfig;
  } catch {
    return null;
  }
}

function promptConfig(): AppConfig {
  const baseUrl = window.prompt('Review service URL', 'http://127.0.0.1:8350') ?? '';
  const token = window.prompt('Bearer token (blank if none)', '') ?? '';
  const actorId = window.prompt('Your reviewer id', 'reviewer') ?? 'reviewer';
  const config = { baseUrl, token, actorId };
  localStorage.setItem(CONFIG_KEY, JSON.stringify(config));
  return config;
}

export class ReviewApp {
  private state: QueueState = initialQueue();
  private detail: TaskView | null = null;
  private fields: SentenceFields = { scene: '', currentGaze: '', futureGaze: '', rationale: '' };
  private likert: Record<string, number | null> = {
    quality: null, informativeness: null, correctness: null,
  };

  constructor(
    private readonly client: ReviewApiClient,
    private readonly actorId: string,
    private readonly queueEl: HTMLElement,
    private readonly detailEl: HTMLElement,
    private readonly noteEl: HTMLElement,
  ) {}

  async refreshQueue(filter: TaskStatus | null = this.state.filter): Promise<void> {
    try {
      const page = await this.client.listTasks(filter ?? undefined, this.state.page);
      this.state = applyPage({ ...this.state, filter }, page.tasks, page.page, page.pages,
                             page.total);
    } catch (err) {
      if (err instanceof AuthError) {
        localStorage.removeItem(CONFIG_KEY);
        this.note('Token rejected; reload to re-enter credentials.');
        return;
      }
      if (err instanceof NetworkError) {
        this.state = withBanner(this.state, 'Cannot reach the review service.');
      } else {
        throw err;
      }
    }
    this.queueEl.innerHTML = renderQueue(this.state);
  }

  async openTask(sampleId: string): Promise<void> {
    this.detail = await this.client.getTask(sampleId);
    this.state = { ...this.state, selected: sampleId };
    const source = this.detail.current_text ?? this.detail.draft_text ?? '';
    this.fields = splitIntoFields(source);
    this.renderDetail();
  }

  private renderDetail(): void {
    if (!this.detail) return;
    const values = [
      this.fields.scene, this.fields.currentGaze, this.fields.futureGaze, this.fields.rationale,
    ];
    this.detailEl.innerHTML = renderTaskDetail(this.detail, values, this.actorId);
    this.syncRatingButton();
  }

  private note(text: string): void {
    this.noteEl.textContent = text;
  }

  readFields(): void {
    const areas = this.detailEl.querySelectorAll('textarea');
    const keys: (keyof SentenceFields)[] = ['scene', 'currentGaze', 'futureGaze', 'rationale'];
    areas.forEach((area, i) => {
      const key = keys[i];
      if (key) this.fields[key] = (area as HTMLTextAreaElement).value;
    });
  }

  async save(): Promise<void> {
    if (!this.detail) return;
    this.readFields();
    const hints = checkFields(this.fields);
    if (!hints.ok) {
      this.note(`Fill all four sentences (${hints.emptyFields.join(', ')} empty).`);
      return;
    }
    const sampleId = this.detail.sample_id;
    const update = optimisticStatus(this.state, sampleId, 'refined');
    this.state = update.state;
    this.queueEl.innerHTML = renderQueue(this.state);
    try {
      if (this.detail.status === 'pending') {
        await this.client.claimTask(sampleId, this.actorId);
      }
      const task = await this.client.submitEdit(sampleId, this.actorId,
                                                joinSentences(this.fields));
      this.detail = task;
      this.state = replaceTask(this.state, task);
      this.note(task.warnings.length ? `Saved with warnings: ${task.warnings.join('; ')}`
                                     : 'Saved.');
    } catch (err) {
      this.state = update.rollback(this.state);
      if (err instanceof ValidationError) {
        // Server messages verbatim: the parser's diagnostics are the contract.
        this.note(err.detail.message);
      } else {
        this.note(String(err));
      }
    }
    this.queueEl.innerHTML = renderQueue(this.state);
    this.renderDetail();
  }

  async approve(): Promise<void> {
    if (!this.detail) return;
    try {
      const task = await this.client.approveTask(this.detail.sample_id, this.actorId);
      this.detail = task;
      this.state = replaceTask(this.state, task);
      this.note('Approved.');
    } catch (err) {
      this.note(String(err));
    }
    this.queueEl.innerHTML = renderQueue(this.state);
    this.renderDetail();
  }

  setLikert(criterion: string, value: number): void {
    this.likert[criterion] = value;
    this.syncRatingButton();
  }

  private syncRatingButton(): void {
    const button = this.detailEl.querySelector('[data-action="submit-rating"]');
    if (button) {
      (button as HTMLButtonElement).disabled = !likertComplete({
        quality: this.likert.quality ?? null,
        informativeness: this.likert.informativeness ?? null,
        correctness: this.likert.correctness ?? null,
      });
    }
  }

  async submitRating(): Promise<void> {
    if (!this.detail) return;
    if (!likertComplete({
      quality: this.likert.quality ?? null,
      informativeness: this.likert.informativeness ?? null,
      correctness: this.likert.correctness ?? null,
    })) {
      this.note('Select all three criteria first.');
      return;
    }
    const response = await this.client.submitRating(
      this.detail.sample_id, this.actorId,
      this.likert.quality as number,
      this.likert.informativeness as number,
      this.likert.correctness as number,
    );
    this.detail = response.task;
    this.state = replaceTask(this.state, response.task);
    this.noteEl.innerHTML = renderConfirmation(response.human_score);
    this.renderDetail();
  }

  async nextTask(): Promise<void> {
    this.state = selectNext(this.state);
    if (this.state.selected) await this.openTask(this.state.selected);
    this.queueEl.innerHTML = renderQueue(this.state);
  }
}

export function bootstrap(): void {
  const config = loadConfig() ?? promptConfig();
  const client = new ReviewApiClient({ baseUrl: config.baseUrl, token: config.token });
  const app = new ReviewApp(
    client,
    config.actorId,
    document.getElementById('queue')!,
    document.getElementById('detail')!,
    document.getElementById('note')!,
  );

  document.getElementById('queue')!.addEventListener('click', (event) => {
    const card = (event.target as HTMLElement).closest('[data-sample-id]');
    if (card) void app.openTask(card.getAttribute('data-sample-id')!);
    const retry = (event.target as HTMLElement).closest('[data-action="retry"]');
    if (retry) void app.refreshQueue();
  });

  document.getElementById('detail')!.addEventListener('click', (event) => {
    const target = event.target as HTMLElement;
    const likert = target.closest('button.likert');
    if (likert) {
      app.setLikert(likert.getAttribute('data-criterion')!,
                    Number(likert.getAttribute('data-value')));
      likert.parentElement?.querySelectorAll('button.likert')
        .forEach((b) => b.classList.remove('chosen'));
      likert.classList.add('chosen');
      return;
    }
    const action = target.closest('[data-action]')?.getAttribute('data-action');
    if (action === 'save') void app.save();
    if (action === 'approve') void app.approve();
    if (action === 'submit-rating') void app.submitRating();
  });

  document.addEventListener('keydown', (event) => {
    if (event.key === 'n' && !(event.target instanceof HTMLTextAreaElement)) {
      void app.nextTask();
    } else if (event.key === 's' && (event.ctrlKey || event.metaKey)) {
      event.preventDefault();
      void app.save();
    } else if (event.key === 'Enter' && (event.ctrlKey || event.metaKey)) {
      event.preventDefault();
      void app.approve();
    }
  });

  const filterEl = document.getElementById('filter') as HTMLSelectElement | null;
  filterEl?.addEventListener('change', () => {
    const value = filterEl.value;
    void app.refreshQueue(value === 'all' ? null : (value as TaskStatus));
  });

  void app.refreshQueue();
}

if (typeof document !== 'undefined' && document.getElementById('queue')) {
  bootstrap();
}
