import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vista.captions import parse_caption
from vista.errors import (
    AssetNotFoundError,
    DuplicateSampleError,
    InsufficientSamplesError,
    InvalidArgumentError,
    InvalidTransition,
    NotFoundError,
    ProvenanceOrderError,
    RangeError,
)
from vista.heatmap import ScoredFramePair
from vista.store import LogicalClock, Store, gazetteer_file_hash
from vista.vlm import PROBE_QUESTIONS, ProbeSet


def make_pair(video: str, index: int, score: float = 0.5) -> ScoredFramePair:
    return ScoredFramePair(
        video_id=video, index_t=index, index_t1=index + 1, kl_score=score,
        rgb_t=f"{video}/rgb_{index}.png", rgb_t1=f"{video}/rgb_{index + 1}.png",
        gaze_t=f"{video}/gaze_{index}.txt", gaze_t1=f"{video}/gaze_{index + 1}.txt",
    )


def fresh_store(tmp_path, name="store") -> Store:
    return Store(tmp_path / name, clock=LogicalClock(), verify_assets=False)


def caption_for(sid, provenance="draft"):
    text = (
        "A quiet road with a car. The driver focuses on the car. "
        "The gaze will shift to the crosswalk. The crosswalk is next."
    )
    return parse_caption(text, sample_id=sid, provenance=provenance)


class TestIngest:
    def test_two_distinct_pairs(self, tmp_path):
        store = fresh_store(tmp_path)
        added = store.ingest_samples([make_pair("v0", 0), make_pair("v0", 3)])
        assert len(added) == 2
        assert all(r.split == "unassigned" for r in store.records.values())

    def test_duplicate_rejected(self, tmp_path):
        store = fresh_store(tmp_path)
        store.ingest_samples([make_pair("v0", 0)])
        with pytest.raises(DuplicateSampleError):
            store.ingest_samples([make_pair("v0", 0)])

    def test_unreadable_asset_rejected(self, tmp_path):
        store = Store(tmp_path / "s", clock=LogicalClock(), verify_assets=True)
        with pytest.raises(AssetNotFoundError):
            store.ingest_samples([make_pair("v0", 0)])

    def test_181_sample_count(self, tmp_path):
        store = fresh_store(tmp_path)
        pairs = []
        for v in range(90):
            pairs.extend(make_pair(f"v{v:02d}", 2 * i) for i in range(3 - v % 3))
        pairs.append(make_pair("v90", 0))
        store.ingest_samples(pairs)
        assert len(store.records) == 181


class TestSplit:
    def build(self, tmp_path, videos):
        store = fresh_store(tmp_path)
        pairs = []
        for v, n in videos.items():
            pairs.extend(make_pair(v, 2 * i) for i in range(n))
        store.ingest_samples(pairs)
        return store

    def test_exact_counts_and_purity(self, tmp_path):
        # 30 size-3 + 30 size-2 + 31 size-1 videos = 181 records
        videos = {f"v{i:02d}": (3 - i % 3) for i in range(90)}
        videos["v90"] = 1
        store = self.build(tmp_path, videos)
        store.split_dataset((80, 20, 81), seed=7)
        counts = {"train": 0, "val": 0, "test": 0, "unassigned": 0}
        for rec in store.records.values():
            counts[rec.split] += 1
        assert (counts["train"], counts["val"], counts["test"]) == (80, 20, 81)
        by_video = {}
        for rec in store.records.values():
            by_video.setdefault(rec.pair.video_id, set()).add(rec.split)
        assert all(len(s) == 1 for s in by_video.values())

    def test_insufficient_rejected(self, tmp_path):
        store = self.build(tmp_path, {f"v{i}": 10 for i in range(10)})  # 100 records
        with pytest.raises(InsufficientSamplesError):
            store.split_dataset((80, 20, 81), seed=7)

    def test_deterministic_for_seed(self, tmp_path):
        videos = {f"v{i:02d}": 3 for i in range(20)}
        a = self.build(tmp_path / "a", videos)
        b = self.build(tmp_path / "b", videos)
        ra = a.split_dataset((30, 9, 12), seed=99)
        rb = b.split_dataset((30, 9, 12), seed=99)
        assert ra == rb

    def test_no_exact_whole_video_fit(self, tmp_path):
        store = self.build(tmp_path, {"v0": 4, "v1": 4})
        with pytest.raises(InsufficientSamplesError):
            store.split_dataset((3, 4, 1), seed=1)

    @given(st.integers(min_value=0, max_value=10**6))
    @settings(max_examples=15, deadline=None)
    def test_purity_property(self, seed):
        import tempfile

        with tempfile.TemporaryDirectory() as tmp:
            videos = {f"v{i}": (i % 3) + 1 for i in range(12)}  # 24 records
            store = Store(f"{tmp}/s", clock=LogicalClock(), verify_assets=False)
            pairs = []
            for v, n in videos.items():
                pairs.extend(make_pair(v, 2 * i) for i in range(n))
            store.ingest_samples(pairs)
            store.split_dataset((10, 6, 4), seed=seed)
            by_video = {}
            for rec in store.records.values():
                by_video.setdefault(rec.pair.video_id, set()).add(rec.split)
            assert all(len(s) == 1 for s in by_video.values())


class TestProvenance:
    def seeded(self, tmp_path):
        store = fresh_store(tmp_path)
        store.ingest_samples([make_pair("v0", 0)])
        sid = "v0:0"
        store.record_draft(sid, caption_for(sid))
        return store, sid

    def test_draft_to_refined(self, tmp_path):
        store, sid = self.seeded(tmp_path)
        store.transition_provenance(sid, caption_for(sid, "refined"), actor_id="alice")
        rec = store.records[sid]
        assert rec.provenance == "refined"
        assert len(store.edit_history(sid)) == 1

    def test_backward_rejected(self, tmp_path):
        store, sid = self.seeded(tmp_path)
        store.transition_provenance(sid, caption_for(sid, "refined"), actor_id="alice")
        store.approve(sid, actor_id="alice")
        with pytest.raises(ProvenanceOrderError):
            store.transition_provenance(sid, caption_for(sid, "draft"), actor_id="alice")

    def test_refine_without_draft_rejected(self, tmp_path):
        store = fresh_store(tmp_path)
        store.ingest_samples([make_pair("v0", 0)])
        with pytest.raises(InvalidTransition):
            store.transition_provenance("v0:0", caption_for("v0:0", "refined"), "alice")

    def test_five_sequential_edits_replay(self, tmp_path):
        store, sid = self.seeded(tmp_path)
        for i in range(5):
            text = (
                f"A road numbered {i} with a car. The driver focuses on the car. "
                "The gaze will shift to the sign. The sign is next."
            )
            store.transition_provenance(sid, parse_caption(text, sample_id=sid,
                                                           provenance="refined"), "alice")
        assert len(store.edit_history(sid)) == 5
        assert "numbered 4" in store.records[sid].caption_refined.raw_text
        replayed = Store(store.directory, clock=LogicalClock(), verify_assets=False)
        assert replayed.to_dict() == store.to_dict()

    def test_unknown_sample(self, tmp_path):
        store = fresh_store(tmp_path)
        with pytest.raises(NotFoundError):
            store.transition_provenance("nope:0", caption_for("nope:0"), "alice")

    def test_approve_requires_refined(self, tmp_path):
        store, sid = self.seeded(tmp_path)
        with pytest.raises(InvalidTransition):
            store.approve(sid, "alice")

    def test_approve_idempotent(self, tmp_path):
        store, sid = self.seeded(tmp_path)
        store.transition_provenance(sid, caption_for(sid, "refined"), "alice")
        store.approve(sid, "alice")
        events_before = store.events_path.read_text().count("\n")
        store.approve(sid, "alice")
        assert store.events_path.read_text().count("\n") == events_before
        assert store.records[sid].approved


class TestRatings:
    def rated_store(self, tmp_path):
        store = fresh_store(tmp_path)
        store.ingest_samples([make_pair("v0", 0), make_pair("v1", 0)])
        store.split_dataset((0, 0, 2), seed=1)
        return store

    def test_rating_stored(self, tmp_path):
        store = self.rated_store(tmp_path)
        store.submit_rating("v0:0", "e1", 4, 5, 3)
        assert store.records["v0:0"].ratings[0].values == (4, 5, 3)

    def test_out_of_range(self, tmp_path):
        store = self.rated_store(tmp_path)
        with pytest.raises(RangeError):
            store.submit_rating("v0:0", "e1", 0, 5, 3)
        with pytest.raises(RangeError):
            store.submit_rating("v0:0", "e1", 4, 6, 3)

    def test_duplicate_evaluator_replaces(self, tmp_path):
        store = self.rated_store(tmp_path)
        store.submit_rating("v0:0", "e1", 2, 2, 2)
        store.submit_rating("v0:0", "e1", 5, 5, 5)
        rec = store.records["v0:0"]
        assert len(rec.ratings) == 1
        assert rec.ratings[0].quality == 5
        assert '"replaced": true' in store.events_path.read_text()

    def test_non_test_split_rejected_by_default(self, tmp_path):
        store = fresh_store(tmp_path)
        store.ingest_samples([make_pair("v0", 0)])
        with pytest.raises(InvalidArgumentError):
            store.submit_rating("v0:0", "e1", 4, 4, 4)
        store.submit_rating("v0:0", "e1", 4, 4, 4, allow_any_split=True)


class TestPersistence:
    def test_event_replay_reproduces_state(self, tmp_path):
        store = fresh_store(tmp_path)
        store.ingest_samples([make_pair("v0", 0), make_pair("v1", 2)])
        store.split_dataset((0, 0, 2), seed=3)
        sid = "v0:0"
        store.record_draft(sid, caption_for(sid))
        store.record_probe(ProbeSet(sample_id=sid, questions=PROBE_QUESTIONS,
                                    answers=("a",) * 5))
        store.transition_provenance(sid, caption_for(sid, "refined"), "alice")
        store.approve(sid, "alice")
        store.submit_rating(sid, "e1", 4, 5, 3)
        store.set_config_echo({"k": 2})
        store.mark_stage_completed("select")
        replayed = Store(store.directory, clock=LogicalClock(), verify_assets=False)
        assert replayed.to_dict() == store.to_dict()
        assert replayed.completed_stages.keys() == store.completed_stages.keys()
        assert replayed.edit_history(sid) == store.edit_history(sid)

    def test_snapshot_round_trip_bytes(self, tmp_path):
        store = fresh_store(tmp_path)
        store.ingest_samples([make_pair("v0", 0)])
        store.record_draft("v0:0", caption_for("v0:0"))
        first = store.save().read_bytes()
        loaded = Store(store.directory, clock=LogicalClock(), verify_assets=False)
        second = loaded.save().read_bytes()
        assert first == second

    def test_snapshot_is_valid_json(self, tmp_path):
        store = fresh_store(tmp_path)
        store.ingest_samples([make_pair("v0", 0)])
        path = store.save()
        doc = json.loads(path.read_text())
        assert doc["schema_version"] == 1
        assert doc["records"][0]["sample_id"] == "v0:0"


class TestExport:
    def test_exports_only_approved(self, tmp_path):
        from PIL import Image
        import numpy as np

        img = tmp_path / "rgb.png"
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(img)
        store = fresh_store(tmp_path)
        pair = ScoredFramePair(video_id="v0", index_t=0, index_t1=1, kl_score=0.1,
                               rgb_t=str(img), rgb_t1=str(img), gaze_t=str(img),
                               gaze_t1=str(img))
        store.ingest_samples([pair])
        sid = "v0:0"
        store.record_draft(sid, caption_for(sid))
        assert store.export_refined(tmp_path / "out1") == []
        store.transition_provenance(sid, caption_for(sid, "refined"), "alice")
        store.approve(sid, "alice")
        exported = store.export_refined(tmp_path / "out2")
        assert len(exported) == 1
        img_path, txt_path = exported[0]
        assert img_path.endswith("v0_0.png")
        assert "gaze will shift" in open(txt_path).read()


def test_gazetteer_hash_stable(tmp_path):
    f = tmp_path / "gaz.txt"
    f.write_text("car\n")
    assert gazetteer_file_hash(f) == gazetteer_file_hash(f)
