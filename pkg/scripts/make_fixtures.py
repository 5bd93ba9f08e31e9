#!/usr/bin/env python3
"""Regenerate the committed fixtures/ corpus.

Deterministic: rebuilding produces identical bytes. Run from the repo root:

    python3 scripts/make_fixtures.py
"""

import json
import shutil
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from vista import pipeline, synthdata
from vista.gazetteer import extract_entities
from vista.metrics import ea_f1, meteor, parascore, rouge_l

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"

PARA_ADJ = {"busy": "crowded", "quiet": "calm", "wide": "broad",
            "narrow": "tight", "wet": "rainy", "sunlit": "bright"}


def paraphrase_text(i: int) -> str:
    adj, focus, target = synthdata._pick(i)
    return (
        f"A {PARA_ADJ[adj]} stretch of road shows a {focus} close to a {target}. "
        f"The driver is watching the {focus} in front. "
        f"Attention will move to the {target} shortly. "
        f"That {target} shapes the upcoming maneuver."
    )


def generic_text(i: int) -> str:
    return (
        "An outdoor area appears in the picture. "
        "The driver is looking somewhere ahead. "
        "Focus will move again soon. "
        "Everything continues as before."
    )


def build_ranking_triples() -> list[dict]:
    triples = []
    for i in range(10):
        ref = synthdata.reference_text(i)
        triples.append(
            {
                "reference": ref,
                "exact": ref,
                "paraphrase": paraphrase_text(i),
                "generic": generic_text(i),
            }
        )
    # The ordering property must hold on the shipped set; verify before writing.
    for t in triples:
        scores = {}
        for kind in ("exact", "paraphrase", "generic"):
            scores[kind] = {
                "rouge_l": rouge_l(t[kind], t["reference"]),
                "meteor": meteor(t[kind], t["reference"]),
                "ea_f1": ea_f1(extract_entities(t[kind]), extract_entities(t["reference"])).f1,
                "parascore": parascore(None, t[kind], t["reference"]),
            }
        for metric in ("rouge_l", "meteor", "ea_f1", "parascore"):
            assert scores["exact"][metric] >= scores["paraphrase"][metric] >= scores["generic"][metric], (
                metric, scores)
        assert scores["exact"]["ea_f1"] > scores["generic"]["ea_f1"]
    return triples


def main() -> None:
    if FIXTURES.exists():
        shutil.rmtree(FIXTURES)
    FIXTURES.mkdir(parents=True)

    assets = FIXTURES / "assets"
    synthdata.make_corpus(assets, n_videos=3, frames_per_video=8, seed=1)

    # Select with the default parameters to learn which sample ids the replay
    # corpus must cover.
    with tempfile.TemporaryDirectory() as tmp:
        stub = Path(tmp) / "stub"
        stub.mkdir()
        config = pipeline.resolve_config(
            assets_dir=str(assets), store_dir=str(Path(tmp) / "store"),
            transport="replay", replay_dir=str(stub),
        )
        pipeline.stage_ingest(config)
        pipeline.stage_select(config)
        sample_ids = list(pipeline.open_store(config).records)

    synthdata.write_replay_responses(FIXTURES / "replay", sample_ids)
    synthdata.write_references(FIXTURES / "references.jsonl", sample_ids)
    synthdata.write_refinements(FIXTURES / "refinements.jsonl", sample_ids)
    synthdata.write_probe_references(FIXTURES / "probe_references.jsonl", sample_ids)

    triples = build_ranking_triples()
    (FIXTURES / "ranking_triples.json").write_text(
        json.dumps(triples, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    (FIXTURES / "synonyms.txt").write_text(
        "# optional synonym sets for METEOR stage 3\n"
        "car, vehicle, sedan\n"
        "road, street, roadway\n"
        "quickly, fast, rapidly\n",
        encoding="utf-8",
    )

    print(f"fixtures written for {len(sample_ids)} samples: {sample_ids}")


if __name__ == "__main__":
    main()
