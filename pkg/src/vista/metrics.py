"""Caption evaluation suite: ROUGE-L, METEOR, Entity Alignment F1, ParaScore,
and report aggregation with human Likert ratings.

All metrics share one tokenizer (see text.tokenize) so scores stay
comparable. Inputs may be raw strings or pre-tokenized lists.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import accel
from .errors import BackendError, EmptyReferenceError, EmptyReportError, RangeError
from .gazetteer import Gazetteer, extract_entities
from .text import levenshtein, stem, tokenize

METRIC_NAMES = ("rouge_l", "meteor", "ea_f1", "parascore")

DEFAULT_PARASCORE_OMEGA = 0.05
PARASCORE_DIVERGENCE_THRESHOLD = 0.35

# Classic METEOR constants: Fmean recall weight, penalty weight, penalty power.
METEOR_ALPHA = 10.0
METEOR_GAMMA = 0.5
METEOR_BETA = 3.0

_CHUNK_SEARCH_NODE_CAP = 200_000


def _tokens(text_or_tokens) -> list[str]:
    if isinstance(text_or_tokens, str):
        return tokenize(text_or_tokens)
    return list(text_or_tokens)


# --- ROUGE-L ---

def _f1_from_lcs(lcs: float, n_cand: int, n_ref: int) -> float:
    if n_cand == 0 or lcs == 0:
        return 0.0
    p = lcs / n_cand
    r = lcs / n_ref
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def _encode_pair(cand: list[str], ref: list[str]) -> tuple[np.ndarray, np.ndarray]:
    vocab: dict[str, int] = {}
    def ids(seq):
        out = np.empty(len(seq), dtype=np.int64)
        for i, tok in enumerate(seq):
            out[i] = vocab.setdefault(tok, len(vocab))
        return out
    return ids(cand), ids(ref)


def rouge_l(candidate, reference) -> float:
    """LCS F-measure with beta=1: F = 2PR/(P+R), P = LCS/|cand|, R = LCS/|ref|."""
    cand = _tokens(candidate)
    ref = _tokens(reference)
    if not ref:
        raise EmptyReferenceError("ROUGE-L reference is empty")
    if not cand:
        return 0.0
    a, b = _encode_pair(cand, ref)
    return _f1_from_lcs(accel.lcs_len(a, b), len(cand), len(ref))


def encode_token_batch(seqs: list[list[str]]) -> tuple[np.ndarray, np.ndarray]:
    """Pad tokenized sequences into an int id matrix + length vector."""
    vocab: dict[str, int] = {}
    lens = np.array([len(s) for s in seqs], dtype=np.int64)
    width = max(1, int(lens.max()) if len(lens) else 1)
    mat = np.zeros((len(seqs), width), dtype=np.int64)
    for i, s in enumerate(seqs):
        for j, tok in enumerate(s):
            mat[i, j] = vocab.setdefault(tok, len(vocab)) + 1  # 0 stays padding
    return mat, lens


def rouge_l_matrix(candidates: list, references: list) -> np.ndarray:
    """Cross-product ROUGE-L scores (candidates x references) via the batch kernel.

    Shares the LCS kernel and F1 formula with the scalar path.
    """
    cands = [_tokens(c) for c in candidates]
    refs = [_tokens(r) for r in references]
    if any(not r for r in refs):
        raise EmptyReferenceError("ROUGE-L reference is empty")
    all_seqs = cands + refs
    mat, lens = encode_token_batch(all_seqs)
    nc = len(cands)
    lcs = accel.lcs_batch(mat[:nc], lens[:nc], mat[nc:], lens[nc:])
    lc = lens[:nc].astype(np.float64)[:, None]
    lr = lens[nc:].astype(np.float64)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(lc > 0, lcs / lc, 0.0)
        r = lcs / lr
        denom = p + r
        f = np.where(denom > 0, 2.0 * p * r / np.where(denom > 0, denom, 1.0), 0.0)
    return f


# --- METEOR ---

class SynonymTable:
    """Synonym sets keyed by Porter stem so inflected forms still hit their set."""

    def __init__(self, sets: list[set[str]]):
        self._ids: dict[str, set[int]] = {}
        for idx, words in enumerate(sets):
            for w in words:
                self._ids.setdefault(stem(w.lower()), set()).add(idx)

    @classmethod
    def from_file(cls, path) -> "SynonymTable":
        sets = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            words = {w.strip().lower() for w in line.split(",") if w.strip()}
            if len(words) >= 2:
                sets.append(words)
        return cls(sets)

    def set_ids(self, token: str) -> set[int]:
        return self._ids.get(stem(token.lower()), set())

    def related(self, a: str, b: str) -> bool:
        return bool(self.set_ids(a) & self.set_ids(b))


_EMPTY_SYNONYMS = SynonymTable([])


def _stage_counts(cand, ref, syn: SynonymTable):
    """Sequential stage maxima: exact, then stem on residuals, then synonym."""
    cc, cr = Counter(cand), Counter(ref)
    n_exact = sum(min(cc[w], cr[w]) for w in cc.keys() & cr.keys())

    res_c = Counter()
    res_r = Counter()
    for w, n in cc.items():
        left = n - min(n, cr.get(w, 0))
        if left:
            res_c[w] = left
    for w, n in cr.items():
        left = n - min(n, cc.get(w, 0))
        if left:
            res_r[w] = left

    stem_c = Counter()
    stem_r = Counter()
    for w, n in res_c.items():
        stem_c[stem(w)] += n
    for w, n in res_r.items():
        stem_r[stem(w)] += n
    n_stem = sum(min(stem_c[s], stem_r[s]) for s in stem_c.keys() & stem_r.keys())

    # Residuals by stem class after the stem stage; one side is zero per class.
    rem_c = []
    rem_r = []
    for s in set(stem_c) | set(stem_r):
        matched = min(stem_c.get(s, 0), stem_r.get(s, 0))
        rem_c.extend([s] * (stem_c.get(s, 0) - matched))
        rem_r.extend([s] * (stem_r.get(s, 0) - matched))

    # Synonym relation is not an equivalence: maximum bipartite matching.
    adj = [
        [j for j, sr in enumerate(rem_r) if syn._ids.get(sc, set()) & syn._ids.get(sr, set())]
        for sc in rem_c
    ]
    match_r = [-1] * len(rem_r)

    def augment(i, seen):
        for j in adj[i]:
            if j in seen:
                continue
            seen.add(j)
            if match_r[j] == -1 or augment(match_r[j], seen):
                match_r[j] = i
                return True
        return False

    n_syn = sum(1 for i in range(len(rem_c)) if augment(i, set()))
    return n_exact, n_stem, n_syn


def _pair_stage(cw: str, rw: str, syn: SynonymTable):
    if cw == rw:
        return 0
    if stem(cw) == stem(rw):
        return 1
    if syn.related(cw, rw):
        return 2
    return None


def _min_chunks(cand, ref, syn, counts) -> int:
    """Fewest chunks over occurrence assignments consistent with stage counts.

    Exact branch-and-bound in candidate order; greedy completion past the node
    cap (unreachable at caption sizes, matters only for adversarial inputs).
    """
    n_exact, n_stem, n_syn = counts
    total = n_exact + n_stem + n_syn
    if total == 0:
        return 0

    exact_slots = Counter()
    cc, cr = Counter(cand), Counter(ref)
    for w in cc.keys() & cr.keys():
        exact_slots[w] = min(cc[w], cr[w])
    # Stem slots keyed by stem class, computed on residual counts.
    res_c = Counter(cand)
    res_r = Counter(ref)
    for w, k in exact_slots.items():
        res_c[w] -= k
        res_r[w] -= k
    stem_c, stem_r = Counter(), Counter()
    for w, n in res_c.items():
        if n:
            stem_c[stem(w)] += n
    for w, n in res_r.items():
        if n:
            stem_r[stem(w)] += n
    stem_slots = Counter(
        {s: min(stem_c[s], stem_r[s]) for s in stem_c.keys() & stem_r.keys()}
    )
    stem_slots = +stem_slots

    best = [total + 1]
    nodes = [0]
    n_c = len(cand)
    compat: list[list[tuple[int, int]]] = []
    for i, cw in enumerate(cand):
        row = []
        for j, rw in enumerate(ref):
            s = _pair_stage(cw, rw, syn)
            if s is not None:
                row.append((j, s))
        compat.append(row)

    def dfs(i, used_r, taken, chunks, prev, ex, stm, syn_left):
        if chunks >= best[0]:
            return
        if taken == total:
            best[0] = chunks
            return
        if i == n_c or nodes[0] > _CHUNK_SEARCH_NODE_CAP:
            return
        # Bound: remaining candidate positions must cover remaining slots.
        if total - taken > n_c - i:
            return
        nodes[0] += 1
        options = compat[i]
        # Try chunk-continuing option first for a strong initial bound.
        ordered = sorted(
            options,
            key=lambda o: 0 if (prev is not None and o[0] == prev[1] + 1 and i == prev[0] + 1) else 1,
        )
        for j, stage in ordered:
            if used_r & (1 << j):
                continue
            w_c = cand[i]
            if stage == 0:
                if ex[w_c] <= 0:
                    continue
                ex[w_c] -= 1
            elif stage == 1:
                s_c = stem(w_c)
                if stm.get(s_c, 0) <= 0:
                    continue
                stm[s_c] -= 1
            else:
                if syn_left <= 0:
                    continue
            cont = prev is not None and i == prev[0] + 1 and j == prev[1] + 1
            dfs(
                i + 1,
                used_r | (1 << j),
                taken + 1,
                chunks + (0 if cont else 1),
                (i, j),
                ex,
                stm,
                syn_left - (1 if stage == 2 else 0),
            )
            if stage == 0:
                ex[w_c] += 1
            elif stage == 1:
                stm[stem(w_c)] = stm.get(stem(w_c), 0) + 1
        dfs(i + 1, used_r, taken, chunks, prev, ex, stm, syn_left)

    dfs(0, 0, 0, 0, None, dict(exact_slots), dict(stem_slots), n_syn)
    if best[0] > total:
        # Node cap hit before any complete assignment: greedy first-available.
        pairs = []
        used = set()
        ex = dict(exact_slots)
        stm = dict(stem_slots)
        syn_left = n_syn
        for i, row in enumerate(compat):
            for j, stage in row:
                if j in used:
                    continue
                if stage == 0 and ex.get(cand[i], 0) > 0:
                    ex[cand[i]] -= 1
                elif stage == 1 and stm.get(stem(cand[i]), 0) > 0:
                    stm[stem(cand[i])] -= 1
                elif stage == 2 and syn_left > 0:
                    syn_left -= 1
                else:
                    continue
                used.add(j)
                pairs.append((i, j))
                break
        chunks = 0
        prev = None
        for ci, rj in pairs:
            if prev is None or ci != prev[0] + 1 or rj != prev[1] + 1:
                chunks += 1
            prev = (ci, rj)
        return max(chunks, 1)
    return best[0]


def meteor(candidate, reference, synonym_table: Optional[SynonymTable] = None) -> float:
    """Staged unigram alignment (exact -> stem -> synonym) with the classic
    (10, 0.5, 3) constants: Fmean = 10PR/(R+9P), penalty = 0.5*(chunks/m)^3."""
    cand = _tokens(candidate)
    ref = _tokens(reference)
    if not ref:
        raise EmptyReferenceError("METEOR reference is empty")
    if not cand:
        return 0.0
    syn = synonym_table or _EMPTY_SYNONYMS
    counts = _stage_counts(cand, ref, syn)
    m = sum(counts)
    if m == 0:
        return 0.0
    chunks = _min_chunks(cand, ref, syn, counts)
    p = m / len(cand)
    r = m / len(ref)
    fmean = METEOR_ALPHA * p * r / (r + (METEOR_ALPHA - 1.0) * p)
    penalty = METEOR_GAMMA * (chunks / m) ** METEOR_BETA
    return fmean * (1.0 - penalty)


# --- Entity Alignment F1 ---

class EntityAlignment(NamedTuple):
    precision: float
    recall: float
    f1: float


def ea_f1(candidate_entities, reference_entities) -> EntityAlignment:
    """Set-overlap F1 with the conventions: both empty -> (1,1,1); candidate
    empty against a non-empty reference -> (0,0,0)."""
    cand = frozenset(candidate_entities)
    ref = frozenset(reference_entities)
    if not cand and not ref:
        return EntityAlignment(1.0, 1.0, 1.0)
    if not cand or not ref:
        return EntityAlignment(0.0, 0.0, 0.0)
    inter = len(cand & ref)
    p = inter / len(cand)
    r = inter / len(ref)
    f1 = 2.0 * p * r / (p + r) if (p + r) > 0 else 0.0
    return EntityAlignment(p, r, f1)


# --- ParaScore ---

class CountCosineBackend:
    """Fallback similarity: cosine over token count vectors. Never fails."""

    name = "count-cosine"

    def __call__(self, a: str, b: str) -> float:
        ta, tb = tokenize(a), tokenize(b)
        if not ta and not tb:
            return 1.0
        ca, cb = Counter(ta), Counter(tb)
        dot = sum(ca[w] * cb[w] for w in ca.keys() & cb.keys())
        na = math.sqrt(sum(v * v for v in ca.values()))
        nb = math.sqrt(sum(v * v for v in cb.values()))
        if na == 0.0 or nb == 0.0:
            return 0.0
        return dot / (na * nb)


def parascore(source, candidate, reference,
              backend: Optional[Callable[[str, str], float]] = None,
              omega: float = DEFAULT_PARASCORE_OMEGA) -> float:
    """Semantic similarity plus a bounded lexical-divergence reward.

    score = clamp(Sim(cand, ref) + omega * DS(source, cand), 0, 1) where DS is
    the normalized token edit distance thresholded at 0.35 and scaled to [0,1].
    Without a source text the DS term is 0 and the metric is reference-based.
    """
    cand = _tokens(candidate)
    ref = _tokens(reference)
    if not ref:
        raise EmptyReferenceError("ParaScore reference is empty")
    be = backend or CountCosineBackend()
    try:
        sim = float(be(" ".join(cand), " ".join(ref)))
    except Exception as exc:
        raise BackendError(f"similarity backend failed: {exc}") from exc
    sim = min(max(sim, 0.0), 1.0)
    ds = 0.0
    src = _tokens(source) if source is not None else []
    if src:
        ned = levenshtein(src, cand) / max(len(src), len(cand))
        ds = min(ned, PARASCORE_DIVERGENCE_THRESHOLD) / PARASCORE_DIVERGENCE_THRESHOLD
    return min(max(sim + omega * ds, 0.0), 1.0)


# --- human ratings & reports ---

@dataclass(frozen=True)
class HumanRating:
    sample_id: str
    evaluator_id: str
    quality: int
    informativeness: int
    correctness: int

    def __post_init__(self):
        for name in ("quality", "informativeness", "correctness"):
            v = getattr(self, name)
            if not isinstance(v, int) or not 1 <= v <= 5:
                raise RangeError(f"{name} must be an integer in 1..5, got {v!r}")

    @property
    def values(self) -> tuple[int, int, int]:
        return (self.quality, self.informativeness, self.correctness)


@dataclass
class EvaluationReport:
    system_id: str
    per_sample: dict[str, dict[str, float]]
    corpus_means: dict[str, float]
    human_score: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "system_id": self.system_id,
            "per_sample": {k: self.per_sample[k] for k in sorted(self.per_sample)},
            "corpus_means": dict(sorted(self.corpus_means.items())),
            "human_score": self.human_score,
        }


def aggregate_report(per_sample_scores: dict[str, dict[str, float]],
                     ratings: Optional[list[HumanRating]] = None,
                     system_id: str = "default") -> EvaluationReport:
    """Arithmetic corpus means; human score is the grand mean over every
    (evaluator x criterion x sample) value when ratings are present."""
    if not per_sample_scores:
        raise EmptyReportError("no scored samples")
    for sid, scores in per_sample_scores.items():
        for name in METRIC_NAMES:
            value = scores.get(name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise RangeError(f"{name} for {sid} outside [0, 1]: {value}")
    metrics_present = sorted({m for scores in per_sample_scores.values() for m in scores})
    corpus = {
        m: sum(s[m] for s in per_sample_scores.values()) / len(per_sample_scores)
        for m in metrics_present
    }
    human = None
    if ratings:
        values = [v for rating in ratings for v in rating.values]
        human = sum(values) / len(values)
    return EvaluationReport(
        system_id=system_id,
        per_sample={k: dict(v) for k, v in per_sample_scores.items()},
        corpus_means=corpus,
        human_score=human,
    )


def score_caption_pair(candidate_text: str, reference_text: str,
                       source_text: Optional[str] = None,
                       synonym_table: Optional[SynonymTable] = None,
                       backend: Optional[Callable[[str, str], float]] = None,
                       gazetteer: Optional[Gazetteer] = None,
                       omega: float = DEFAULT_PARASCORE_OMEGA) -> dict[str, float]:
    """All four metrics for one candidate/reference caption pair."""
    return {
        "rouge_l": rouge_l(candidate_text, reference_text),
        "meteor": meteor(candidate_text, reference_text, synonym_table),
        "ea_f1": ea_f1(
            extract_entities(candidate_text, gazetteer),
            extract_entities(reference_text, gazetteer),
        ).f1,
        "parascore": parascore(source_text, candidate_text, reference_text,
                               backend=backend, omega=omega),
    }


def score_against_references(candidate_text: str, reference_texts: list[str],
                             **kwargs) -> dict[str, float]:
    """Max over references per metric (forward-compatible; corpora here ship one)."""
    scored = [score_caption_pair(candidate_text, ref, **kwargs) for ref in reference_texts]
    return {m: max(s[m] for s in scored) for m in METRIC_NAMES}


def score_probe_set(answers: list[str], reference_answers: list[str],
                    **kwargs) -> dict[str, float]:
    """Per-question metric scores aggregated by mean into one sample-level row."""
    if len(answers) != len(reference_answers):
        raise EmptyReportError(
            f"probe answers ({len(answers)}) misaligned with references ({len(reference_answers)})"
        )
    rows = [score_caption_pair(a, r, **kwargs) for a, r in zip(answers, reference_answers)]
    return {m: sum(row[m] for row in rows) / len(rows) for m in METRIC_NAMES}


def write_report_json(report: EvaluationReport, path) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def write_report_csv(report: EvaluationReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", *METRIC_NAMES])
        for sid in sorted(report.per_sample):
            row = report.per_sample[sid]
            writer.writerow([sid, *(f"{row.get(m, float('nan')):.6f}" for m in METRIC_NAMES)])
