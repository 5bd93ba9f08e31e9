// Full review round-trip against a live service instance: load a pending
// task, edit it to a valid four-sentence caption, approve, rate (4,5,3),
// then check the store's event log and the session human score.
//
// Skippable with SKIP_INTEGRATION=1 for frontend-only development.

import { spawn, type ChildProcess } from 'node:child_process';
import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ReviewApiClient } from '../src/api';
import { joinSentences, splitIntoFields } from '../src/validation';

const PORT = 8392;
const BASE = `http://127.0.0.1:${PORT}`;
const REPO_ROOT = join(__dirname, '..', '..');

const run = process.env.SKIP_INTEGRATION ? describe.skip : describe;

let server: ChildProcess | null = null;
let storeDir = '';

async function waitForReady(child: ChildProcess): Promise<string> {
  return new Promise((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error('dev server did not start')), 20_000);
    let buffer = '';
    child.stdout!.on('data', (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(/READY store=(\S+)/);
      if (match) {
        clearTimeout(timer);
        resolve(match[1]!);
      }
    });
    child.on('exit', (code) => {
      clearTimeout(timer);
      reject(new Error(`dev server exited early (${code}): ${buffer}`));
    });
  });
}

async function waitForHttp(): Promise<void> {
  for (let i = 0; i < 100; i += 1) {
    try {
      const resp = await fetch(`${BASE}/tasks`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 100));
  }
  throw new Error('service never answered');
}

run('review round-trip against a live service', () => {
  beforeAll(async () => {
    server = spawn('python3', ['scripts/dev_server.py', '--port', String(PORT)], {
      cwd: REPO_ROOT,
      stdio: ['ignore', 'pipe', 'pipe'],
    });
    storeDir = await waitForReady(server);
    await waitForHttp();
  }, 30_000);

  afterAll(() => {
    server?.kill('SIGTERM');
  });

  it('pending -> edit -> approve -> rate, with events and mean', async () => {
    const client = new ReviewApiClient({ baseUrl: BASE });

    const page = await client.listTasks('pending');
    expect(page.total).toBeGreaterThan(0);
    const target = page.tasks[0]!;

    await client.claimTask(target.sample_id, 'expert-a');

    const fields = splitIntoFields(target.draft_text ?? '');
    fields.scene = 'A busy city street with a car and a traffic light.';
    fields.futureGaze = 'The gaze will shift to the traffic light next.';
    const edited = await client.submitEdit(target.sample_id, 'expert-a', joinSentences(fields));
    expect(edited.status).toBe('refined');
    expect(edited.history_len).toBe(1);

    const approved = await client.approveTask(target.sample_id, 'expert-a');
    expect(approved.status).toBe('approved');

    const rating = await client.submitRating(target.sample_id, 'expert-a', 4, 5, 3);
    expect(rating.human_score).toBeCloseTo(4.0, 10);
    expect(rating.task.status).toBe('approved');

    const events = readFileSync(join(storeDir, 'events.jsonl'), 'utf-8')
      .trim()
      .split('\n')
      .map((line) => JSON.parse(line));
    const mine = events.filter((e) => e.sample_id === target.sample_id);
    const kinds = mine.map((e) => e.type);
    expect(kinds).toContain('task_claimed');
    expect(kinds).toContain('caption_edited');
    expect(kinds).toContain('caption_approved');
    expect(kinds).toContain('rating_submitted');

    const exported = await fetch(`${BASE}/export/refined`).then((r) => r.json());
    const row = exported.records.find(
      (r: { sample_id: string }) => r.sample_id === target.sample_id,
    );
    expect(row.caption).toContain('The gaze will shift to the traffic light next.');
  }, 30_000);

  it('rejects a three-sentence edit with the parser message', async () => {
    const client = new ReviewApiClient({ baseUrl: BASE });
    const page = await client.listTasks('pending');
    const target = page.tasks[0]!;
    const err = await client
      .submitEdit(target.sample_id, 'expert-b', 'One. Two. Three.')
      .catch((e) => e);
    expect(err.name).toBe('ValidationError');
    expect(err.detail.code).toBe('sentence_count');
    expect(err.detail.found_n).toBe(3);
    expect(err.detail.message).toContain('found 3');
  }, 30_000);

  it('keeps validation server-authoritative for borderline future phrasing', async () => {
    const client = new ReviewApiClient({ baseUrl: BASE });
    const page = await client.listTasks('pending');
    const target = page.tasks[1] ?? page.tasks[0]!;
    const text =
      'A road with a bus. The driver watches the bus. The driver looked left. Habit.';
    const saved = await client.submitEdit(target.sample_id, 'expert-b', text);
    expect(saved.status).toBe('refined'); // warning, not rejection
    expect(saved.warnings.length).toBeGreaterThan(0);
  }, 30_000);
});
