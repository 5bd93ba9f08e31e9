// Shapes of the review service API (see the service module for the source of truth).

export type TaskStatus = 'pending' | 'in_review' | 'refined' | 'approved';

export const ASSET_SLOTS = ['rgb_t', 'gaze_t', 'rgb_t1', 'gaze_t1'] as const;
export type AssetSlot = (typeof ASSET_SLOTS)[number];

export interface Rating {
  evaluator_id: string;
  quality: number;
  informativeness: number;
  correctness: number;
}

export interface TaskView {
  sample_id: string;
  status: TaskStatus;
  assigned_to: string | null;
  split: string;
  kl_score: number;
  draft_text: string | null;
  current_text: string | null;
  sentences: string[] | null;
  warnings: string[];
  asset_urls: Record<AssetSlot, string>;
  ratings: Rating[];
  history_len: number;
}

export interface TaskPage {
  tasks: TaskView[];
  page: number;
  pages: number;
  total: number;
}

export interface RatingResponse {
  task: TaskView;
  human_score: number | null;
}

export interface SentenceFields {
  scene: string;
  currentGaze: string;
  futureGaze: string;
  rationale: string;
}

export interface ValidationDetail {
  code: string;
  found_n?: number;
  message: string;
}
