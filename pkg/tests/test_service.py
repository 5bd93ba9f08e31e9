import random

import pytest
from fastapi.testclient import TestClient

from vista import pipeline, synthdata
from vista.pipeline import resolve_config, stage_draft, stage_ingest, stage_select
from vista.service import create_app, render_overlay, task_status
from vista.store import Store

VALID_EDIT = (
    "A clear road with a truck near a stop sign. The driver focuses on the truck. "
    "The gaze will shift to the stop sign next. The stop sign sets the priority."
)

NO_MARKER_EDIT = (
    "A clear road with a truck. The driver focuses on the truck. "
    "The driver looked at the sign. The sign sets the priority."
)


@pytest.fixture(scope="module")
def drafted_store(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc")
    assets = root / "assets"
    synthdata.make_corpus(assets, n_videos=2, frames_per_video=6, seed=4)
    stub = root / "stub"
    stub.mkdir()
    config = resolve_config(assets_dir=str(assets), store_dir=str(root / "store"),
                            transport="replay", replay_dir=str(stub))
    stage_ingest(config)
    stage_select(config)
    sids = list(pipeline.open_store(config).records)
    synthdata.write_replay_responses(root / "replay", sids)
    config.replay_dir = str(root / "replay")
    stage_draft(config)
    return config


@pytest.fixture()
def client(drafted_store, tmp_path):
    # Fresh store copy per test so mutations stay isolated.
    import shutil

    store_dir = tmp_path / "store"
    shutil.copytree(drafted_store.store_dir, store_dir)
    store = Store(store_dir, verify_assets=False)
    app = create_app(store, token="")
    return TestClient(app), store


class TestAuth:
    def test_token_required_when_configured(self, drafted_store, tmp_path):
        import shutil

        store_dir = tmp_path / "auth_store"
        shutil.copytree(drafted_store.store_dir, store_dir)
        store = Store(store_dir, verify_assets=False)
        app = create_app(store, token="sekrit")
        client = TestClient(app)
        assert client.get("/tasks").status_code == 401
        ok = client.get("/tasks", headers={"Authorization": "Bearer sekrit"})
        assert ok.status_code == 200


class TestListTasks:
    def test_lists_pending_drafts(self, client):
        http, store = client
        body = http.get("/tasks").json()
        assert body["total"] == len(store.records)
        assert all(t["status"] == "pending" for t in body["tasks"])

    def test_filter_by_status(self, client):
        http, store = client
        sid = next(iter(store.records))
        http.post(f"/tasks/{sid}/edit", json={"actor_id": "alice", "text": VALID_EDIT})
        pending = http.get("/tasks", params={"status": "pending"}).json()
        refined = http.get("/tasks", params={"status": "refined"}).json()
        assert refined["total"] == 1
        assert pending["total"] == len(store.records) - 1

    def test_invalid_filter(self, client):
        http, _ = client
        assert http.get("/tasks", params={"status": "bogus"}).status_code == 400

    def test_empty_store_is_empty_page(self, tmp_path):
        store = Store(tmp_path / "empty", verify_assets=False)
        http = TestClient(create_app(store, token=""))
        body = http.get("/tasks").json()
        assert body == {"tasks": [], "page": 1, "pages": 1, "total": 0}

    def test_pagination_disjoint_union(self, client):
        http, store = client
        seen = []
        page = 1
        while True:
            body = http.get("/tasks", params={"page": page, "page_size": 2}).json()
            seen.extend(t["sample_id"] for t in body["tasks"])
            if page >= body["pages"]:
                break
            page += 1
        assert sorted(seen) == sorted(store.records)
        assert len(set(seen)) == len(seen)


class TestAssets:
    def test_all_four_slots_return_png(self, client):
        http, store = client
        sid = next(iter(store.records))
        for slot in ("rgb_t", "gaze_t", "rgb_t1", "gaze_t1"):
            resp = http.get(f"/tasks/{sid}/assets/{slot}")
            assert resp.status_code == 200
            assert resp.headers["content-type"] == "image/png"
            assert resp.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_unknown_slot(self, client):
        http, store = client
        sid = next(iter(store.records))
        assert http.get(f"/tasks/{sid}/assets/depth").status_code == 400

    def test_overlay_differs_from_raw(self, client):
        http, store = client
        sid = next(iter(store.records))
        raw = http.get(f"/tasks/{sid}/assets/rgb_t").content
        overlay = http.get(f"/tasks/{sid}/assets/gaze_t").content
        assert raw != overlay


class TestEditFlow:
    def test_valid_edit_refines(self, client):
        http, store = client
        sid = next(iter(store.records))
        resp = http.post(f"/tasks/{sid}/edit", json={"actor_id": "alice", "text": VALID_EDIT})
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "refined"
        assert body["history_len"] == 1
        assert store.records[sid].caption_refined.raw_text == VALID_EDIT

    def test_five_sentence_edit_rejected_with_parser_message(self, client):
        http, store = client
        sid = next(iter(store.records))
        text = "One. Two. Three. Four. Five."
        resp = http.post(f"/tasks/{sid}/edit", json={"actor_id": "alice", "text": text})
        assert resp.status_code == 422
        detail = resp.json()["detail"]
        assert detail["code"] == "sentence_count"
        assert detail["found_n"] == 5
        assert "found 5" in detail["message"]

    def test_three_sentence_edit_rejected(self, client):
        http, store = client
        sid = next(iter(store.records))
        resp = http.post(f"/tasks/{sid}/edit",
                         json={"actor_id": "alice", "text": "One. Two. Three."})
        assert resp.status_code == 422
        assert resp.json()["detail"]["found_n"] == 3

    def test_future_marker_warning_allows_save(self, client):
        http, store = client
        sid = next(iter(store.records))
        resp = http.post(f"/tasks/{sid}/edit",
                         json={"actor_id": "alice", "text": NO_MARKER_EDIT})
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "refined"
        assert body["warnings"]  # amber badge material

    def test_identity_edit_records_confirmation(self, client):
        http, store = client
        sid = next(iter(store.records))
        draft = store.records[sid].caption_draft.raw_text
        resp = http.post(f"/tasks/{sid}/edit", json={"actor_id": "alice", "text": draft})
        assert resp.status_code == 200
        assert resp.json()["status"] == "refined"
        assert store.edit_history(sid)[0]["after"] == draft

    def test_unknown_sample_404(self, client):
        http, _ = client
        resp = http.post("/tasks/nope:0/edit", json={"actor_id": "a", "text": VALID_EDIT})
        assert resp.status_code == 404

    def test_edit_rejected_after_refined(self, client):
        http, store = client
        sid = next(iter(store.records))
        http.post(f"/tasks/{sid}/edit", json={"actor_id": "alice", "text": VALID_EDIT})
        resp = http.post(f"/tasks/{sid}/edit", json={"actor_id": "alice", "text": VALID_EDIT})
        assert resp.status_code == 409

    def test_claim_conflict(self, client):
        http, store = client
        sid = next(iter(store.records))
        assert http.post(f"/tasks/{sid}/claim", json={"actor_id": "alice"}).status_code == 200
        resp = http.post(f"/tasks/{sid}/edit", json={"actor_id": "bob", "text": VALID_EDIT})
        assert resp.status_code == 409


class TestApprove:
    def approve_ready(self, http, sid):
        http.post(f"/tasks/{sid}/edit", json={"actor_id": "alice", "text": VALID_EDIT})

    def test_refined_to_approved(self, client):
        http, store = client
        sid = next(iter(store.records))
        self.approve_ready(http, sid)
        resp = http.post(f"/tasks/{sid}/approve", json={"actor_id": "alice"})
        assert resp.status_code == 200
        assert resp.json()["status"] == "approved"

    def test_pending_approve_invalid(self, client):
        http, store = client
        sid = next(iter(store.records))
        resp = http.post(f"/tasks/{sid}/approve", json={"actor_id": "alice"})
        assert resp.status_code == 409

    def test_approve_idempotent(self, client):
        http, store = client
        sid = next(iter(store.records))
        self.approve_ready(http, sid)
        http.post(f"/tasks/{sid}/approve", json={"actor_id": "alice"})
        events = store.events_path.read_text()
        resp = http.post(f"/tasks/{sid}/approve", json={"actor_id": "alice"})
        assert resp.status_code == 200
        assert resp.json()["status"] == "approved"
        assert store.events_path.read_text() == events


class TestRatings:
    def test_rating_stored_with_mean(self, client):
        http, store = client
        sid = next(iter(store.records))
        resp = http.post(
            f"/tasks/{sid}/rating",
            json={"evaluator_id": "e1", "quality": 4, "informativeness": 5, "correctness": 3},
        )
        # default store copy has no test split; service built without override
        assert resp.status_code == 403

    def test_rating_on_test_split(self, drafted_store, tmp_path):
        import shutil

        store_dir = tmp_path / "store"
        shutil.copytree(drafted_store.store_dir, store_dir)
        store = Store(store_dir, verify_assets=False)
        n = len(store.records)
        store.split_dataset((0, 0, n), seed=1)
        http = TestClient(create_app(store, token=""))
        sid = next(iter(store.records))
        resp = http.post(
            f"/tasks/{sid}/rating",
            json={"evaluator_id": "e1", "quality": 4, "informativeness": 5, "correctness": 3},
        )
        assert resp.status_code == 200
        assert resp.json()["human_score"] == pytest.approx(4.0)

    def test_out_of_range_rejected(self, client):
        http, store = client
        sid = next(iter(store.records))
        resp = http.post(
            f"/tasks/{sid}/rating",
            json={"evaluator_id": "e1", "quality": 0, "informativeness": 5, "correctness": 3},
        )
        assert resp.status_code == 422


class TestExportEndpoint:
    def test_only_approved_exported(self, client):
        http, store = client
        sid = next(iter(store.records))
        assert http.get("/export/refined").json() == {"records": []}
        http.post(f"/tasks/{sid}/edit", json={"actor_id": "alice", "text": VALID_EDIT})
        http.post(f"/tasks/{sid}/approve", json={"actor_id": "alice"})
        body = http.get("/export/refined").json()
        assert len(body["records"]) == 1
        assert body["records"][0]["sample_id"] == sid
        assert body["records"][0]["caption"] == VALID_EDIT


class TestStatusMachine:
    ORDER = ["pending", "in_review", "refined", "approved"]

    def test_random_operation_sequences_never_reverse(self, client):
        http, store = client
        rng = random.Random(1234)
        sids = list(store.records)
        history = {sid: [task_status(store, store.records[sid])] for sid in sids}

        def record(sid):
            history[sid].append(task_status(store, store.records[sid]))

        for _ in range(120):
            sid = rng.choice(sids)
            op = rng.choice(["claim", "edit", "approve", "rate"])
            if op == "claim":
                http.post(f"/tasks/{sid}/claim", json={"actor_id": rng.choice("ab")})
            elif op == "edit":
                http.post(f"/tasks/{sid}/edit",
                          json={"actor_id": rng.choice("ab"), "text": VALID_EDIT})
            elif op == "approve":
                http.post(f"/tasks/{sid}/approve", json={"actor_id": rng.choice("ab")})
            else:
                http.post(f"/tasks/{sid}/rating",
                          json={"evaluator_id": "e", "quality": 3,
                                "informativeness": 3, "correctness": 3})
            record(sid)

        for sid, states in history.items():
            indices = [self.ORDER.index(s) for s in states]
            assert indices == sorted(indices), f"{sid}: {states}"

    def test_every_state_change_has_one_event(self, client):
        http, store = client
        sid = next(iter(store.records))
        before = store.events_path.read_text().count("\n")
        http.post(f"/tasks/{sid}/claim", json={"actor_id": "alice"})     # +1 claimed
        http.post(f"/tasks/{sid}/edit",
                  json={"actor_id": "alice", "text": VALID_EDIT})        # +1 edited
        http.post(f"/tasks/{sid}/approve", json={"actor_id": "alice"})   # +1 approved
        after = store.events_path.read_text().count("\n")
        assert after - before == 3


def test_overlay_renderer_shapes(tmp_path):
    import numpy as np
    from PIL import Image

    rgb = tmp_path / "rgb.png"
    Image.fromarray(np.zeros((16, 16, 3), dtype=np.uint8)).save(rgb)
    gaze = tmp_path / "gaze.txt"
    np.savetxt(gaze, np.eye(8))
    data = render_overlay(str(rgb), str(gaze))
    with Image.open(__import__("io").BytesIO(data)) as img:
        assert img.size == (16, 16)
        assert img.mode == "RGB"
