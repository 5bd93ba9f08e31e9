// Pure HTML renderers: strings in, strings out, so they test without a DOM.

import type { QueueState } from './state';
import type { Rating, TaskView } from './types';
import { ASSET_SLOTS } from './types';

const SLOT_LABELS: Record<string, string> = {
  rgb_t: 'frame t',
  gaze_t: 'gaze overlay t',
  rgb_t1: 'frame t+1',
  gaze_t1: 'gaze overlay t+1',
};

const FIELD_LABELS: [string, string][] = [
  ['scene', 'Scene description'],
  ['currentGaze', 'Current gaze focus'],
  ['futureGaze', 'Future gaze prediction'],
  ['rationale', 'Rationale'],
];

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function statusBadge(status: string): string {
  return `<span class="badge badge-${status}">${status.replace('_', ' ')}</span>`;
}

export function warningBadges(warnings: string[]): string {
  return warnings
    .map((w) => `<span class="badge badge-warning" title="${escapeHtml(w)}">!</span>`)
    .join('');
}

export function renderTaskCard(task: TaskView, selected: boolean): string {
  const classes = selected ? 'task-card selected' : 'task-card';
  return (
    `<li class="${classes}" data-sample-id="${escapeHtml(task.sample_id)}">` +
    `<span class="sample-id">${escapeHtml(task.sample_id)}</span>` +
    statusBadge(task.status) +
    warningBadges(task.warnings) +
    `</li>`
  );
}

export function renderQueue(state: QueueState): string {
  if (state.banner) {
    return (
      `<div class="banner" role="alert">${escapeHtml(state.banner)} ` +
      `<button data-action="retry">Retry</button></div>`
    );
  }
  if (state.tasks.length === 0) {
    return `<p class="empty-state">No tasks in this view.</p>`;
  }
  const cards = state.tasks
    .map((t) => renderTaskCard(t, t.sample_id === state.selected))
    .join('');
  return (
    `<ul class="task-list">${cards}</ul>` +
    `<nav class="pager">page ${state.page} of ${state.pages} (${state.total} tasks)</nav>`
  );
}

export function renderImageGrid(task: TaskView): string {
  // Side by side: (frame t | overlay t) above (frame t+1 | overlay t+1), so the
  // reviewer sees the attention shift the caption must describe.
  const cells = ASSET_SLOTS.map(
    (slot) =>
      `<figure class="slot slot-${slot}">` +
      `<img src="${escapeHtml(task.asset_urls[slot])}" alt="${SLOT_LABELS[slot]}">` +
      `<figcaption>${SLOT_LABELS[slot]}</figcaption></figure>`,
  );
  return `<div class="image-grid">${cells.join('')}</div>`;
}

export function renderSentenceFields(values: string[], fieldErrors: string[] = []): string {
  const rows = FIELD_LABELS.map(([key, label], i) => {
    const error = fieldErrors[i] ? `<p class="field-error">${escapeHtml(fieldErrors[i]!)}</p>` : '';
    return (
      `<label class="sentence-field" data-field="${key}">${label}` +
      `<textarea name="${key}" rows="2">${escapeHtml(values[i] ?? '')}</textarea>${error}</label>`
    );
  });
  return `<div class="sentence-fields">${rows.join('')}</div>`;
}

export function renderRatingWidget(ratings: Rating[], evaluatorId: string): string {
  const existing = ratings.find((r) => r.evaluator_id === evaluatorId);
  const criteria: [string, string][] = [
    ['quality', 'Overall quality'],
    ['informativeness', 'Informativeness'],
    ['correctness', 'Factual correctness'],
  ];
  const rows = criteria.map(([key, label]) => {
    const current = existing ? (existing as unknown as Record<string, number>)[key] : null;
    const buttons = [1, 2, 3, 4, 5]
      .map(
        (v) =>
          `<button data-criterion="${key}" data-value="${v}" ` +
          `class="likert${current === v ? ' chosen' : ''}">${v}</button>`,
      )
      .join('');
    return `<div class="likert-row" data-criterion="${key}"><span>${label}</span>${buttons}</div>`;
  });
  const note = existing
    ? `<p class="audit-note">Replaces your earlier rating for this sample.</p>`
    : '';
  return `<div class="rating-widget">${rows.join('')}${note}` +
    `<button data-action="submit-rating" disabled>Submit rating</button></div>`;
}

export function renderTaskDetail(task: TaskView, fieldValues: string[],
                                 evaluatorId: string): string {
  const approveDisabled = task.status === 'approved' || task.status === 'pending';
  return (
    `<section class="task-detail" data-sample-id="${escapeHtml(task.sample_id)}">` +
    `<header>${escapeHtml(task.sample_id)} ${statusBadge(task.status)}` +
    warningBadges(task.warnings) +
    `</header>` +
    renderImageGrid(task) +
    renderSentenceFields(fieldValues) +
    `<div class="actions">` +
    `<button data-action="save">Save edit</button>` +
    `<button data-action="approve"${approveDisabled ? ' disabled' : ''}>Approve</button>` +
    `</div>` +
    renderRatingWidget(task.ratings, evaluatorId) +
    `</section>`
  );
}

export function renderConfirmation(humanScore: number | null): string {
  const mean = humanScore === null ? 'n/a' : humanScore.toFixed(1);
  return `<p class="confirmation">Rating stored. Mean for this sample: ${mean}</p>`;
}
