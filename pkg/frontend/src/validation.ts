// Client-side hints only: the server's caption parser is authoritative, these
// mirror it so obvious problems surface before a round trip. A passing hint
// never overrides a server rejection.

import type { SentenceFields } from './types';

export const FUTURE_MARKERS = ['will', 'going to', 'is about to', 'shall', 'next'];

export function normalizeSentence(text: string): string {
  return text.replace(/\s+/g, ' ').trim();
}

export function joinSentences(fields: SentenceFields): string {
  const parts = [fields.scene, fields.currentGaze, fields.futureGaze, fields.rationale];
  return parts
    .map((raw) => {
      let sentence = normalizeSentence(raw);
      if (sentence && !/[.!?]$/.test(sentence)) sentence += '.';
      return sentence;
    })
    .filter((s) => s.length > 0)
    .join(' ');
}

export interface FieldHints {
  emptyFields: (keyof SentenceFields)[];
  missingFutureMarker: boolean;
  ok: boolean;
}

export function checkFields(fields: SentenceFields): FieldHints {
  const emptyFields = (Object.keys(fields) as (keyof SentenceFields)[]).filter(
    (key) => normalizeSentence(fields[key]).length === 0,
  );
  const future = fields.futureGaze.toLowerCase();
  const missingFutureMarker =
    normalizeSentence(future).length > 0 &&
    !FUTURE_MARKERS.some((marker) => new RegExp(`\\b${marker}\\b`).test(future));
  return { emptyFields, missingFutureMarker, ok: emptyFields.length === 0 };
}

export function splitIntoFields(paragraph: string): SentenceFields {
  // Positional split for pre-filling the editor; tolerant of short inputs.
  const sentences = paragraph.match(/[^.!?]*[.!?]+(?:\s|$)|[^.!?]+$/g) ?? [];
  const cleaned = sentences.map(normalizeSentence).filter((s) => s.length > 0);
  return {
    scene: cleaned[0] ?? '',
    currentGaze: cleaned[1] ?? '',
    futureGaze: cleaned[2] ?? '',
    rationale: cleaned.slice(3).join(' '),
  };
}

export interface LikertSelection {
  quality: number | null;
  informativeness: number | null;
  correctness: number | null;
}

export function likertComplete(selection: LikertSelection): boolean {
  return [selection.quality, selection.informativeness, selection.correctness].every(
    (v) => v !== null && Number.isInteger(v) && v >= 1 && v <= 5,
  );
}

export function likertMean(selection: LikertSelection): number | null {
  if (!likertComplete(selection)) return null;
  const values = [selection.quality, selection.informativeness, selection.correctness] as number[];
  return values.reduce((a, b) => a + b, 0) / values.length;
}
