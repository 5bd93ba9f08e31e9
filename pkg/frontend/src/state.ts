// Queue and editor state: optimistic updates that roll back when the server
// rejects, plus the claim-expiry polling decision.

import type { TaskStatus, TaskView } from './types';

export interface QueueState {
  filter: TaskStatus | null;
  page: number;
  pages: number;
  total: number;
  tasks: TaskView[];
  selected: string | null;
  banner: string | null; // retry banner text for network failures
}

export function initialQueue(): QueueState {
  return { filter: null, page: 1, pages: 1, total: 0, tasks: [], selected: null, banner: null };
}

export function applyPage(state: QueueState, tasks: TaskView[], page: number, pages: number,
                          total: number): QueueState {
  return { ...state, tasks, page, pages, total, banner: null };
}

export function withBanner(state: QueueState, message: string): QueueState {
  return { ...state, banner: message };
}

export function selectNext(state: QueueState): QueueState {
  if (state.tasks.length === 0) return { ...state, selected: null };
  const index = state.tasks.findIndex((t) => t.sample_id === state.selected);
  const next = state.tasks[(index + 1) % state.tasks.length];
  return { ...state, selected: next ? next.sample_id : null };
}

export interface OptimisticUpdate {
  state: QueueState;
  rollback: (current: QueueState) => QueueState;
}

export function optimisticStatus(state: QueueState, sampleId: string,
                                 status: TaskStatus): OptimisticUpdate {
  const before = state.tasks;
  const tasks = state.tasks.map((t) =>
    t.sample_id === sampleId ? { ...t, status } : t,
  );
  return {
    state: { ...state, tasks },
    rollback: (current) => ({ ...current, tasks: before }),
  };
}

export function replaceTask(state: QueueState, task: TaskView): QueueState {
  const tasks = state.tasks.map((t) => (t.sample_id === task.sample_id ? task : t));
  return { ...state, tasks };
}

// Claim handling: the service expires soft claims after 30 minutes of
// inactivity; the client re-polls task status while editing so an expired
// claim is noticed before the save fails.
export const CLAIM_POLL_INTERVAL_MS = 60_000;

export interface ClaimState {
  actorId: string;
  claimedAt: number; // epoch ms
}

export function claimNeedsRefresh(claim: ClaimState, now: number,
                                  ttlMs = 30 * 60_000): boolean {
  return now - claim.claimedAt > ttlMs / 2;
}

export function claimExpired(task: TaskView, actorId: string): boolean {
  return task.status === 'in_review' && task.assigned_to !== null &&
    task.assigned_to !== actorId;
}
