import { describe, expect, it } from 'vitest';

import {
  checkFields,
  joinSentences,
  likertComplete,
  likertMean,
  splitIntoFields,
} from '../src/validation';

const FIELDS = {
  scene: 'A busy street with a car.',
  currentGaze: 'The driver focuses on the car.',
  futureGaze: 'The gaze will shift to the light.',
  rationale: 'The light controls the turn.',
};

describe('joinSentences', () => {
  it('joins the four fields into one paragraph', () => {
    expect(joinSentences(FIELDS)).toBe(
      'A busy street with a car. The driver focuses on the car. ' +
        'The gaze will shift to the light. The light controls the turn.',
    );
  });

  it('normalizes whitespace and appends missing periods', () => {
    const joined = joinSentences({
      scene: '  A   street ',
      currentGaze: 'The driver watches',
      futureGaze: 'Gaze will move next',
      rationale: 'Safety',
    });
    expect(joined).toBe('A street. The driver watches. Gaze will move next. Safety.');
  });
});

describe('checkFields', () => {
  it('accepts complete fields', () => {
    const hints = checkFields(FIELDS);
    expect(hints.ok).toBe(true);
    expect(hints.missingFutureMarker).toBe(false);
  });

  it('lists empty fields', () => {
    const hints = checkFields({ ...FIELDS, currentGaze: '  ' });
    expect(hints.ok).toBe(false);
    expect(hints.emptyFields).toEqual(['currentGaze']);
  });

  it('flags a future sentence without a marker (hint only)', () => {
    const hints = checkFields({ ...FIELDS, futureGaze: 'The driver looked left.' });
    expect(hints.ok).toBe(true); // save still permitted; server decides
    expect(hints.missingFutureMarker).toBe(true);
  });

  it('does not match markers inside words', () => {
    const hints = checkFields({ ...FIELDS, futureGaze: 'A willow tree stands there.' });
    expect(hints.missingFutureMarker).toBe(true);
  });
});

describe('splitIntoFields', () => {
  it('round-trips a four-sentence paragraph', () => {
    const fields = splitIntoFields(joinSentences(FIELDS));
    expect(fields).toEqual(FIELDS);
  });

  it('keeps overflow sentences in the rationale', () => {
    const fields = splitIntoFields('One. Two. Three. Four. Five.');
    expect(fields.rationale).toBe('Four. Five.');
  });

  it('tolerates short input', () => {
    const fields = splitIntoFields('Only one sentence.');
    expect(fields.scene).toBe('Only one sentence.');
    expect(fields.rationale).toBe('');
  });
});

describe('likert', () => {
  it('requires all three criteria', () => {
    expect(likertComplete({ quality: 4, informativeness: 5, correctness: null })).toBe(false);
    expect(likertComplete({ quality: 4, informativeness: 5, correctness: 3 })).toBe(true);
  });

  it('rejects out-of-range values locally', () => {
    expect(likertComplete({ quality: 0, informativeness: 5, correctness: 3 })).toBe(false);
    expect(likertComplete({ quality: 4, informativeness: 6, correctness: 3 })).toBe(false);
  });

  it('computes the confirmation mean', () => {
    expect(likertMean({ quality: 4, informativeness: 5, correctness: 3 })).toBeCloseTo(4.0, 10);
    expect(likertMean({ quality: 4, informativeness: null, correctness: 3 })).toBeNull();
  });
});
