"""Dataset manifest persistence: append-only JSON-lines event log plus a
materialized snapshot.

Human edits are audit-relevant, so state is an event fold: replaying the log
from empty reproduces the manifest exactly. Single writer, many readers.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import random
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .captions import PROVENANCE_ORDER, AttentionCaption
from .errors import (
    AssetNotFoundError,
    DuplicateSampleError,
    InsufficientSamplesError,
    InvalidArgumentError,
    InvalidTransition,
    NotFoundError,
    ProvenanceOrderError,
)
from .heatmap import ScoredFramePair
from .metrics import HumanRating
from .vlm import ProbeSet

SCHEMA_VERSION = 1
SPLITS = ("train", "val", "test", "unassigned")
CLAIM_TTL_SECONDS = 30 * 60

EVENTS_FILE = "events.jsonl"
SNAPSHOT_FILE = "manifest.json"


def utc_clock() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class LogicalClock:
    """Deterministic clock for replay runs: fixed epoch plus an event counter."""

    def __init__(self, base: str = "2000-01-01T00:00:00+00:00", start: int = 0):
        self._base = _dt.datetime.fromisoformat(base)
        self._ticks = start

    def __call__(self) -> str:
        ts = self._base + _dt.timedelta(seconds=self._ticks)
        self._ticks += 1
        return ts.isoformat(timespec="seconds")


def _caption_to_dict(c: Optional[AttentionCaption]) -> Optional[dict]:
    if c is None:
        return None
    return {
        "scene_description": c.scene_description,
        "current_gaze": c.current_gaze,
        "future_gaze": c.future_gaze,
        "rationale": c.rationale,
        "raw_text": c.raw_text,
        "provenance": c.provenance,
        "sample_id": c.sample_id,
    }


def _caption_from_dict(d: Optional[dict]) -> Optional[AttentionCaption]:
    if d is None:
        return None
    return AttentionCaption(**d)


def _pair_to_dict(p: ScoredFramePair) -> dict:
    return {
        "video_id": p.video_id,
        "index_t": p.index_t,
        "index_t1": p.index_t1,
        "kl_score": p.kl_score,
        "rgb_t": p.rgb_t,
        "rgb_t1": p.rgb_t1,
        "gaze_t": p.gaze_t,
        "gaze_t1": p.gaze_t1,
    }


def _pair_from_dict(d: dict) -> ScoredFramePair:
    return ScoredFramePair(**d)


@dataclass
class SampleRecord:
    sample_id: str
    pair: ScoredFramePair
    caption_draft: Optional[AttentionCaption] = None
    caption_refined: Optional[AttentionCaption] = None
    probe: Optional[ProbeSet] = None
    ratings: list[HumanRating] = field(default_factory=list)
    split: str = "unassigned"
    claim: Optional[dict] = None  # {"actor": ..., "ts": ...}
    asset_hashes: dict = field(default_factory=dict)  # slot -> sha256 (assets stay on disk)

    @property
    def provenance(self) -> str:
        if self.caption_refined is not None:
            return self.caption_refined.provenance
        if self.caption_draft is not None:
            return "draft"
        return "draft"

    @property
    def approved(self) -> bool:
        return self.caption_refined is not None and self.caption_refined.provenance == "approved"

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "pair": _pair_to_dict(self.pair),
            "caption_draft": _caption_to_dict(self.caption_draft),
            "caption_refined": _caption_to_dict(self.caption_refined),
            "probe": None
            if self.probe is None
            else {
                "sample_id": self.probe.sample_id,
                "questions": list(self.probe.questions),
                "answers": list(self.probe.answers),
            },
            "ratings": [
                {
                    "sample_id": r.sample_id,
                    "evaluator_id": r.evaluator_id,
                    "quality": r.quality,
                    "informativeness": r.informativeness,
                    "correctness": r.correctness,
                }
                for r in self.ratings
            ],
            "split": self.split,
            "claim": self.claim,
            "asset_hashes": dict(sorted(self.asset_hashes.items())),
        }


class Store:
    """Single-writer manifest store over an event log.

    All mutations append one event and fold it into in-memory state; `save`
    materializes the snapshot. Loading replays the log, so save/load/save is
    byte-identical.
    """

    def __init__(self, directory, clock: Callable[[], str] = utc_clock,
                 gazetteer_hash: str = "", verify_assets: bool = True):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.clock = clock
        self.verify_assets = verify_assets
        self.records: dict[str, SampleRecord] = {}
        self.completed_stages: dict[str, int] = {}
        self.config_echo: dict = {}
        self.meta = {
            "schema_version": SCHEMA_VERSION,
            "created_at": None,
            "gazetteer_hash": gazetteer_hash,
        }
        self._edit_history: dict[str, list[dict]] = {}
        self._seq = 0
        if self.events_path.exists():
            self._replay_file()
        else:
            self._emit("manifest_created", schema_version=SCHEMA_VERSION,
                       gazetteer_hash=gazetteer_hash)

    # --- event plumbing ---

    @property
    def events_path(self) -> Path:
        return self.directory / EVENTS_FILE

    @property
    def snapshot_path(self) -> Path:
        return self.directory / SNAPSHOT_FILE

    @property
    def event_count(self) -> int:
        return self._seq

    def _emit(self, event_type: str, **payload) -> dict:
        self._seq += 1
        event = {"seq": self._seq, "ts": self.clock(), "type": event_type, **payload}
        with open(self.events_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
        self._apply(event)
        return event

    def _replay_file(self) -> None:
        for line in self.events_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            event = json.loads(line)
            self._seq = max(self._seq, event["seq"])
            self._apply(event)

    def _apply(self, event: dict) -> None:
        kind = event["type"]
        if kind == "manifest_created":
            self.meta["created_at"] = event["ts"]
            self.meta["gazetteer_hash"] = event.get("gazetteer_hash", "")
        elif kind == "sample_ingested":
            record = SampleRecord(
                sample_id=event["sample_id"],
                pair=_pair_from_dict(event["pair"]),
                asset_hashes=event.get("asset_hashes", {}),
            )
            self.records[record.sample_id] = record
        elif kind == "split_assigned":
            for sid, split in event["assignments"].items():
                self.records[sid].split = split
        elif kind == "caption_drafted":
            rec = self.records[event["sample_id"]]
            rec.caption_draft = _caption_from_dict(event["caption"])
        elif kind == "probe_recorded":
            rec = self.records[event["sample_id"]]
            rec.probe = ProbeSet(
                sample_id=event["sample_id"],
                questions=tuple(event["questions"]),
                answers=tuple(event["answers"]),
            )
        elif kind == "task_claimed":
            rec = self.records[event["sample_id"]]
            rec.claim = {"actor": event["actor"], "ts": event["ts"]}
        elif kind == "caption_edited":
            rec = self.records[event["sample_id"]]
            rec.caption_refined = _caption_from_dict(event["after"])
            rec.claim = None
            self._edit_history.setdefault(event["sample_id"], []).append(
                {
                    "ts": event["ts"],
                    "actor": event["actor"],
                    "before": event["before"],
                    "after": event["after"]["raw_text"],
                }
            )
        elif kind == "caption_approved":
            rec = self.records[event["sample_id"]]
            rec.caption_refined = rec.caption_refined.with_provenance("approved")
        elif kind == "rating_submitted":
            rec = self.records[event["sample_id"]]
            rec.ratings = [
                r for r in rec.ratings if r.evaluator_id != event["evaluator_id"]
            ]
            rec.ratings.append(
                HumanRating(
                    sample_id=event["sample_id"],
                    evaluator_id=event["evaluator_id"],
                    quality=event["quality"],
                    informativeness=event["informativeness"],
                    correctness=event["correctness"],
                )
            )
        elif kind == "stage_completed":
            self.completed_stages[event["stage"]] = event["seq"]
        elif kind == "config_echo":
            self.config_echo = event["config"]
        else:
            raise InvalidArgumentError(f"unknown event type {kind!r}")

    # --- operations ---

    def ingest_samples(self, pairs: list[ScoredFramePair]) -> list[SampleRecord]:
        added = []
        for pair in pairs:
            sid = pair.sample_id
            if sid in self.records:
                raise DuplicateSampleError(f"sample {sid} already ingested")
            hashes = {}
            if self.verify_assets:
                slots = {"rgb_t": pair.rgb_t, "rgb_t1": pair.rgb_t1,
                         "gaze_t": pair.gaze_t, "gaze_t1": pair.gaze_t1}
                for slot, path in slots.items():
                    if not path or not Path(path).is_file():
                        raise AssetNotFoundError(f"unreadable asset for {sid}: {path!r}")
                    hashes[slot] = hashlib.sha256(Path(path).read_bytes()).hexdigest()
            self._emit("sample_ingested", sample_id=sid, pair=_pair_to_dict(pair),
                       asset_hashes=hashes)
            added.append(self.records[sid])
        return added

    def split_dataset(self, counts: tuple[int, int, int], seed: int) -> dict[str, str]:
        """Seeded whole-video assignment hitting the requested counts exactly.

        Samples of one video never straddle splits; a deterministic
        backtracking search finds the first exact fit in shuffled video order.
        """
        n_train, n_val, n_test = counts
        if min(counts) < 0:
            raise InvalidArgumentError(f"negative split counts {counts}")
        unassigned = [r for r in self.records.values() if r.split == "unassigned"]
        if n_train + n_val + n_test > len(unassigned):
            raise InsufficientSamplesError(
                f"need {n_train + n_val + n_test} unassigned samples, have {len(unassigned)}"
            )
        groups: dict[str, list[str]] = {}
        for r in unassigned:
            groups.setdefault(r.pair.video_id, []).append(r.sample_id)
        videos = sorted(groups)
        random.Random(seed).shuffle(videos)
        sizes = [len(groups[v]) for v in videos]
        suffix = [0] * (len(sizes) + 1)
        for i in range(len(sizes) - 1, -1, -1):
            suffix[i] = suffix[i + 1] + sizes[i]

        choice: list[Optional[int]] = [None] * len(videos)
        dead: set[tuple] = set()

        def backtrack(i: int, rem: tuple[int, int, int]) -> bool:
            if rem == (0, 0, 0):
                return True
            if i == len(videos) or sum(rem) > suffix[i]:
                return False
            key = (i, rem)
            if key in dead:
                return False
            s = sizes[i]
            for j in range(3):
                if rem[j] >= s:
                    choice[i] = j
                    nxt = tuple(rem[t] - s if t == j else rem[t] for t in range(3))
                    if backtrack(i + 1, nxt):
                        return True
            choice[i] = None
            if backtrack(i + 1, rem):
                return True
            dead.add(key)
            return False

        if not backtrack(0, (n_train, n_val, n_test)):
            raise InsufficientSamplesError(
                f"no whole-video assignment hits counts {counts} exactly"
            )
        names = ("train", "val", "test")
        assignments: dict[str, str] = {}
        for video, j in zip(videos, choice):
            if j is None:
                continue
            for sid in groups[video]:
                assignments[sid] = names[j]
        ordered = {sid: assignments[sid] for sid in self.records if sid in assignments}
        self._emit("split_assigned", assignments=ordered)
        return ordered

    def record_draft(self, sample_id: str, caption: AttentionCaption) -> SampleRecord:
        rec = self._get(sample_id)
        self._emit("caption_drafted", sample_id=sample_id, caption=_caption_to_dict(caption))
        return rec

    def record_probe(self, probe: ProbeSet) -> SampleRecord:
        rec = self._get(probe.sample_id)
        self._emit(
            "probe_recorded",
            sample_id=probe.sample_id,
            questions=list(probe.questions),
            answers=list(probe.answers),
        )
        return rec

    def claim(self, sample_id: str, actor_id: str) -> SampleRecord:
        rec = self._get(sample_id)
        if rec.approved:
            raise InvalidTransition(f"{sample_id} is already approved")
        current = self.active_claim(sample_id)
        if current and current["actor"] != actor_id:
            raise InvalidTransition(
                f"{sample_id} is claimed by {current['actor']} until the claim expires"
            )
        self._emit("task_claimed", sample_id=sample_id, actor=actor_id)
        return rec

    def active_claim(self, sample_id: str) -> Optional[dict]:
        rec = self._get(sample_id)
        if rec.claim is None:
            return None
        claimed_at = _dt.datetime.fromisoformat(rec.claim["ts"])
        now = _dt.datetime.fromisoformat(self.clock())
        if (now - claimed_at).total_seconds() > CLAIM_TTL_SECONDS:
            return None
        return rec.claim

    def transition_provenance(self, sample_id: str, new_caption: AttentionCaption,
                              actor_id: str) -> SampleRecord:
        """Append an edit event and move the record forward in provenance."""
        rec = self._get(sample_id)
        if rec.caption_draft is None:
            raise InvalidTransition(f"{sample_id} has no draft caption to refine")
        current = rec.provenance
        if PROVENANCE_ORDER.index(new_caption.provenance) < PROVENANCE_ORDER.index(current):
            raise ProvenanceOrderError(
                f"cannot move {sample_id} backwards: {current} -> {new_caption.provenance}"
            )
        before_text = (
            rec.caption_refined.raw_text if rec.caption_refined else
            rec.caption_draft.raw_text if rec.caption_draft else ""
        )
        self._emit(
            "caption_edited",
            sample_id=sample_id,
            actor=actor_id,
            before=before_text,
            after=_caption_to_dict(new_caption),
        )
        return rec

    def approve(self, sample_id: str, actor_id: str) -> SampleRecord:
        rec = self._get(sample_id)
        if rec.approved:
            return rec  # idempotent
        if rec.caption_refined is None:
            raise InvalidTransition(f"{sample_id} has no refined caption to approve")
        self._emit("caption_approved", sample_id=sample_id, actor=actor_id)
        return rec

    def submit_rating(self, sample_id: str, evaluator_id: str, quality: int,
                      informativeness: int, correctness: int,
                      allow_any_split: bool = False) -> HumanRating:
        rec = self._get(sample_id)
        rating = HumanRating(sample_id, evaluator_id, quality, informativeness, correctness)
        if not allow_any_split and rec.split != "test":
            raise InvalidArgumentError(
                f"{sample_id} is in split {rec.split!r}; ratings attach to the test split "
                "(pass the override to rate anyway)"
            )
        replaced = any(r.evaluator_id == evaluator_id for r in rec.ratings)
        self._emit(
            "rating_submitted",
            sample_id=sample_id,
            evaluator_id=evaluator_id,
            quality=quality,
            informativeness=informativeness,
            correctness=correctness,
            replaced=replaced,
        )
        return rating

    def mark_stage_completed(self, stage: str) -> None:
        self._emit("stage_completed", stage=stage)

    def stage_completed(self, stage: str) -> bool:
        return stage in self.completed_stages

    def set_config_echo(self, config: dict) -> None:
        self._emit("config_echo", config=config)

    def edit_history(self, sample_id: str) -> list[dict]:
        return list(self._edit_history.get(sample_id, []))

    def all_ratings(self) -> list[HumanRating]:
        return [r for rec in self.records.values() for r in rec.ratings]

    def _get(self, sample_id: str) -> SampleRecord:
        rec = self.records.get(sample_id)
        if rec is None:
            raise NotFoundError(f"unknown sample {sample_id}")
        return rec

    # --- snapshot ---

    def to_dict(self) -> dict:
        return {
            "schema_version": self.meta["schema_version"],
            "created_at": self.meta["created_at"],
            "gazetteer_hash": self.meta["gazetteer_hash"],
            "config_echo": self.config_echo,
            "records": [self.records[sid].to_dict() for sid in self.records],
        }

    def save(self) -> Path:
        self.snapshot_path.write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return self.snapshot_path

    def export_refined(self, out_dir) -> list[tuple[str, str]]:
        """Approved captions as (image, caption) pairs in a flat directory."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        exported = []
        for rec in self.records.values():
            if not rec.approved:
                continue
            stem = rec.sample_id.replace(":", "_")
            img_src = Path(rec.pair.rgb_t)
            img_dst = out / f"{stem}{img_src.suffix or '.png'}"
            shutil.copyfile(img_src, img_dst)
            txt_dst = out / f"{stem}.txt"
            txt_dst.write_text(rec.caption_refined.raw_text + "\n", encoding="utf-8")
            exported.append((str(img_dst), str(txt_dst)))
        return exported


def gazetteer_file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
