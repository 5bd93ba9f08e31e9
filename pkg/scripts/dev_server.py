#!/usr/bin/env python3
"""Run the review service on a seeded demo store (frontend dev + integration tests).

    python3 scripts/dev_server.py --port 8350 [--store DIR] [--token T]

Builds a store from the committed fixtures (drafts included, test split
assigned so ratings are accepted), prints one READY line with the store
path, then serves until killed.
"""

import argparse
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from vista import pipeline
from vista.pipeline import resolve_config, stage_draft, stage_ingest, stage_select
from vista.service import create_app

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


def build_store(store_dir: str):
    config = resolve_config(
        assets_dir=str(FIXTURES / "assets"),
        store_dir=store_dir,
        transport="replay",
        replay_dir=str(FIXTURES / "replay"),
    )
    stage_ingest(config)
    stage_select(config)
    stage_draft(config)
    store = pipeline.open_store(config)
    store.split_dataset((0, 0, len(store.records)), seed=1)
    store.save()
    return store


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--port", type=int, default=8350)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--store", default=None)
    parser.add_argument("--token", default="")
    args = parser.parse_args()

    store_dir = args.store or tempfile.mkdtemp(prefix="vista-dev-store-")
    store = build_store(store_dir)
    print(f"READY store={store_dir} tasks={len(store.records)}", flush=True)

    import uvicorn

    app = create_app(store, token=args.token)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
