import { describe, expect, it } from 'vitest';

import {
  applyPage,
  claimExpired,
  claimNeedsRefresh,
  initialQueue,
  optimisticStatus,
  replaceTask,
  selectNext,
} from '../src/state';
import type { TaskView } from '../src/types';

function task(id: string, status: TaskView['status'] = 'pending'): TaskView {
  return {
    sample_id: id,
    status,
    assigned_to: null,
    split: 'test',
    kl_score: 0,
    draft_text: null,
    current_text: null,
    sentences: null,
    warnings: [],
    asset_urls: { rgb_t: '', gaze_t: '', rgb_t1: '', gaze_t1: '' },
    ratings: [],
    history_len: 0,
  };
}

describe('queue state', () => {
  it('clears the banner when a page applies', () => {
    let state = { ...initialQueue(), banner: 'down' };
    state = applyPage(state, [task('a')], 1, 1, 1);
    expect(state.banner).toBeNull();
    expect(state.tasks).toHaveLength(1);
  });

  it('cycles through tasks with selectNext', () => {
    let state = applyPage(initialQueue(), [task('a'), task('b')], 1, 1, 2);
    state = selectNext(state);
    expect(state.selected).toBe('a');
    state = selectNext(state);
    expect(state.selected).toBe('b');
    state = selectNext(state);
    expect(state.selected).toBe('a');
  });

  it('selectNext on an empty queue selects nothing', () => {
    expect(selectNext(initialQueue()).selected).toBeNull();
  });
});

describe('optimistic updates', () => {
  it('applies and rolls back a status change', () => {
    const state = applyPage(initialQueue(), [task('a')], 1, 1, 1);
    const update = optimisticStatus(state, 'a', 'refined');
    expect(update.state.tasks[0]!.status).toBe('refined');
    const rolledBack = update.rollback(update.state);
    expect(rolledBack.tasks[0]!.status).toBe('pending');
  });

  it('replaceTask swaps in the server copy', () => {
    const state = applyPage(initialQueue(), [task('a')], 1, 1, 1);
    const next = replaceTask(state, { ...task('a', 'approved'), history_len: 2 });
    expect(next.tasks[0]!.status).toBe('approved');
    expect(next.tasks[0]!.history_len).toBe(2);
  });
});

describe('claims', () => {
  it('refreshes past half the ttl', () => {
    const claim = { actorId: 'a', claimedAt: 0 };
    expect(claimNeedsRefresh(claim, 14 * 60_000)).toBe(false);
    expect(claimNeedsRefresh(claim, 16 * 60_000)).toBe(true);
  });

  it('detects a claim lost to another actor', () => {
    const mine = { ...task('a', 'in_review'), assigned_to: 'me' };
    const theirs = { ...task('a', 'in_review'), assigned_to: 'other' };
    expect(claimExpired(mine, 'me')).toBe(false);
    expect(claimExpired(theirs, 'me')).toBe(true);
  });
});
