"""Pipeline stages and configuration resolution.

Stages are explicit (ingest, select, draft, probe, evaluate, lora-sim, serve,
export) so ablation sweeps stay scriptable. Every run resolves its full
config up front, prints it, and stores it in the manifest's config echo; a
completed stage refuses to run again without force.
"""

from __future__ import annotations

import json
import os
import re
import warnings
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .captions import parse_caption, split_sentences
from .errors import (
    ConfigError,
    PrerequisiteError,
    StageAlreadyCompletedError,
    StoreLockedError,
    ZeroMassError,
)
from .gazetteer import Gazetteer, default_gazetteer
from .heatmap import (
    load_heatmap_grid,
    make_scored_pairs,
    normalize_heatmap,
    score_video_pairs,
    select_top_k,
)
from .lora import PRESETS, TrainConfig, make_synthetic_dataset, train_toy
from .metrics import (
    SynonymTable,
    aggregate_report,
    score_caption_pair,
    score_probe_set,
    write_report_csv,
    write_report_json,
)
from .store import LogicalClock, Store, gazetteer_file_hash, utc_clock
from .vlm import (
    CAPTION_TEMPLATE,
    HttpTransport,
    ReplayTransport,
    VlmClient,
    build_caption_prompt,
)

STAGES = ("ingest", "select", "draft", "probe", "evaluate", "lora-sim", "serve", "export")

ASSETS_INDEX_FILE = "assets_index.json"
LOCK_FILE = ".lock"
REFINEMENT_ACTOR = "scripted-refinement"


@dataclass
class PipelineConfig:
    assets_dir: str = "assets"
    store_dir: str = "store"
    gazetteer: Optional[str] = None
    synonyms: Optional[str] = None
    # keyframe selection
    k: int = 2
    epsilon: float = 1e-10
    bins: int = 32
    # dataset split (None disables split assignment)
    split_train: Optional[int] = None
    split_val: Optional[int] = None
    split_test: Optional[int] = None
    split_seed: int = 7
    # vlm endpoint
    transport: str = "replay"  # replay | http
    replay_dir: Optional[str] = None
    # metrics
    omega: float = 0.05
    references: Optional[str] = None
    probe_references: Optional[str] = None
    eval_split: str = "all"  # all | train | val | test
    system_id: str = "default"
    # ablation toggles
    skip_human_refinement: bool = False
    drop_future_gaze: bool = False
    lora_preset: str = "few-shot"
    lora_rank: Optional[int] = None
    lora_alpha: Optional[float] = None
    max_token_len: int = 2048  # echoed for parity with the training setup
    # run control
    refinements: Optional[str] = None
    probe: bool = False
    deterministic: Optional[bool] = None
    force: bool = False
    serve_host: str = "127.0.0.1"
    serve_port: int = 8350

    def resolved(self) -> "PipelineConfig":
        if self.deterministic is None:
            self.deterministic = self.transport == "replay"
        if self.transport not in ("replay", "http"):
            raise ConfigError(f"unknown transport {self.transport!r}")
        if self.eval_split not in ("all", "train", "val", "test"):
            raise ConfigError(f"unknown eval_split {self.eval_split!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def echo_dict(self) -> dict:
        """Manifest config echo: semantics only, no self-referential locations
        or run-control flags, so equal runs stay byte-identical."""
        echo = self.to_dict()
        echo.pop("store_dir", None)
        echo.pop("force", None)
        return echo

    @property
    def split_counts(self) -> Optional[tuple[int, int, int]]:
        counts = (self.split_train, self.split_val, self.split_test)
        if all(c is None for c in counts):
            return None
        if any(c is None for c in counts):
            raise ConfigError("split_train, split_val, split_test must be set together")
        return counts  # type: ignore[return-value]


_VALUE_RE = re.compile(r"^(true|false)$", re.IGNORECASE)


def parse_config_file(path) -> dict:
    """Flat TOML-style `key = value` file: strings, numbers, booleans, # comments."""
    values: dict = {}
    known = set(PipelineConfig.__dataclass_fields__)
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if raw.startswith(("'", '"')) and raw.endswith(raw[0]) and len(raw) >= 2:
            value = raw[1:-1]
        elif _VALUE_RE.match(raw):
            value = raw.lower() == "true"
        else:
            try:
                value = int(raw)
            except ValueError:
                try:
                    value = float(raw)
                except ValueError:
                    value = raw
        values[key] = value
    return values


def resolve_config(file_path=None, **overrides) -> PipelineConfig:
    """Defaults, then the config file, then explicit flags (flags win)."""
    values: dict = {}
    if file_path:
        values.update(parse_config_file(file_path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = set(PipelineConfig.__dataclass_fields__)
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return PipelineConfig(**values).resolved()


@contextmanager
def store_lock(store_dir):
    """One pipeline run per store directory."""
    store_dir = Path(store_dir)
    store_dir.mkdir(parents=True, exist_ok=True)
    lock = store_dir / LOCK_FILE
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise StoreLockedError(f"store {store_dir} is locked by another run ({lock})")
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def open_store(config: PipelineConfig) -> Store:
    gaz_hash = gazetteer_file_hash(config.gazetteer) if config.gazetteer else (
        gazetteer_file_hash(resources.files("vista.data").joinpath("gazetteer.txt"))
    )
    clock = LogicalClock() if config.deterministic else utc_clock
    store = Store(config.store_dir, clock=clock, gazetteer_hash=gaz_hash)
    if config.deterministic:
        store.clock = LogicalClock(start=store.event_count)
    return store


def load_gazetteer(config: PipelineConfig) -> Gazetteer:
    if config.gazetteer:
        return Gazetteer.from_file(config.gazetteer)
    return default_gazetteer()


def load_synonyms(config: PipelineConfig) -> Optional[SynonymTable]:
    if config.synonyms:
        return SynonymTable.from_file(config.synonyms)
    return None


def make_client(config: PipelineConfig) -> VlmClient:
    if config.transport == "replay":
        if not config.replay_dir:
            raise ConfigError("replay transport needs replay_dir")
        transport = ReplayTransport(config.replay_dir)
    else:
        transport = HttpTransport.from_env()
    return VlmClient(transport, Path(config.store_dir) / "exchanges")


def _guard_stage(store: Store, stage: str, force: bool) -> None:
    if store.stage_completed(stage) and not force:
        raise StageAlreadyCompletedError(
            f"stage {stage!r} already completed for this store; pass --force to re-run"
        )


def discover_videos(assets_dir) -> dict[str, dict[int, dict[str, str]]]:
    """Map video_id -> frame index -> {'rgb': path, 'gaze': path}."""
    root = Path(assets_dir)
    if not root.is_dir():
        raise PrerequisiteError(f"assets directory not found: {root}")
    videos: dict[str, dict[int, dict[str, str]]] = {}
    for vdir in sorted(p for p in root.iterdir() if p.is_dir()):
        frames: dict[int, dict[str, str]] = {}
        for rgb in sorted(vdir.glob("rgb_*")):
            idx = int(rgb.stem.split("_")[1])
            frames.setdefault(idx, {})["rgb"] = str(rgb)
        for gaze in sorted(vdir.glob("gaze_*")):
            idx = int(gaze.stem.split("_")[1])
            frames.setdefault(idx, {})["gaze"] = str(gaze)
        complete = {i: f for i, f in frames.items() if "rgb" in f and "gaze" in f}
        if complete:
            videos[vdir.name] = dict(sorted(complete.items()))
    if not videos:
        raise PrerequisiteError(f"no videos with rgb_*/gaze_* frames under {root}")
    return videos


def stage_ingest(config: PipelineConfig, store: Optional[Store] = None) -> dict:
    """Validate the raw corpus (readable frames, no all-zero gaze maps) and
    write the assets index the select stage consumes."""
    store = store or open_store(config)
    _guard_stage(store, "ingest", config.force)
    videos = discover_videos(config.assets_dir)
    index = {}
    for video_id, frames in videos.items():
        for i, assets in frames.items():
            grid = load_heatmap_grid(assets["gaze"])
            if grid.sum() <= 0:
                raise ZeroMassError(
                    f"all-zero gaze map {assets['gaze']} (video {video_id}, frame {i})"
                )
        index[video_id] = {str(i): assets for i, assets in frames.items()}
    out = Path(config.store_dir) / ASSETS_INDEX_FILE
    out.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    store.set_config_echo(config.echo_dict())
    store.mark_stage_completed("ingest")
    store.save()
    return {"videos": len(index), "frames": sum(len(v) for v in index.values())}


def _load_assets_index(config: PipelineConfig) -> dict:
    path = Path(config.store_dir) / ASSETS_INDEX_FILE
    if not path.is_file():
        raise PrerequisiteError(f"missing assets index {path}; run the ingest stage first")
    return json.loads(path.read_text(encoding="utf-8"))


def stage_select(config: PipelineConfig, store: Optional[Store] = None) -> dict:
    """Score attention shifts per video, keep the top-k pairs, assign splits."""
    store = store or open_store(config)
    _guard_stage(store, "select", config.force)
    index = _load_assets_index(config)
    bins = (config.bins, config.bins)
    added = 0
    for video_id in sorted(index):
        frames = {int(i): assets for i, assets in index[video_id].items()}
        order = sorted(frames)
        heatmaps = [
            normalize_heatmap(load_heatmap_grid(frames[i]["gaze"]), bins,
                              source_frame=f"{video_id}:{i}")
            for i in order
        ]
        scored = score_video_pairs(heatmaps, config.epsilon)
        # Scores are indexed by position; keep pairs whose frame numbers are
        # actually consecutive and map back to frame numbering.
        by_frame = []
        for pos, value in scored:
            if order[pos] + 1 == order[pos + 1]:
                by_frame.append((order[pos], value))
        top = select_top_k(by_frame, config.k) if by_frame else []
        pairs = make_scored_pairs(video_id, top, frames)
        fresh = [p for p in pairs if p.sample_id not in store.records]
        store.ingest_samples(fresh)
        added += len(fresh)
    counts = config.split_counts
    if counts is not None:
        store.split_dataset(counts, config.split_seed)
    store.set_config_echo(config.echo_dict())
    store.mark_stage_completed("select")
    store.save()
    return {"pairs_added": added, "records": len(store.records)}


def stage_draft(config: PipelineConfig, store: Optional[Store] = None,
                client: Optional[VlmClient] = None) -> dict:
    store = store or open_store(config)
    _guard_stage(store, "draft", config.force)
    if not store.records:
        raise PrerequisiteError("no samples in the manifest; run the select stage first")
    client = client or make_client(config)
    todo = [
        rec for rec in store.records.values()
        if config.force or rec.caption_draft is None
    ]
    prompts = [build_caption_prompt(rec.pair, CAPTION_TEMPLATE) for rec in todo]
    responses = client.draft_many(prompts)
    drafted = 0
    unparseable: list[str] = []
    for rec, response in zip(todo, responses):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")  # future-marker warnings surface at review
                caption = parse_caption(response.raw_text, sample_id=rec.sample_id)
        except Exception:
            unparseable.append(rec.sample_id)
            continue
        store.record_draft(rec.sample_id, caption)
        drafted += 1
    store.set_config_echo(config.echo_dict())
    store.mark_stage_completed("draft")
    store.save()
    return {"drafted": drafted, "unparseable": unparseable}


def stage_probe(config: PipelineConfig, store: Optional[Store] = None,
                client: Optional[VlmClient] = None) -> dict:
    store = store or open_store(config)
    _guard_stage(store, "probe", config.force)
    if not store.records:
        raise PrerequisiteError("no samples in the manifest; run the select stage first")
    client = client or make_client(config)
    recorded = 0
    for rec in store.records.values():
        if rec.probe is not None and not config.force:
            continue
        probe = client.request_probe_answers(rec.pair)
        store.record_probe(probe)
        recorded += 1
    store.set_config_echo(config.echo_dict())
    store.mark_stage_completed("probe")
    store.save()
    return {"probes": recorded}


def apply_refinements(config: PipelineConfig, store: Store) -> int:
    """Scripted stand-in for the human review step: apply canned edits and
    approve them, actor recorded."""
    if not config.refinements:
        return 0
    applied = 0
    for line in Path(config.refinements).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        sid = row["sample_id"]
        if sid not in store.records:
            continue
        caption = parse_caption(row["text"], sample_id=sid, provenance="refined")
        store.transition_provenance(sid, caption, REFINEMENT_ACTOR)
        store.approve(sid, REFINEMENT_ACTOR)
        applied += 1
    return applied


def _load_references(path, key="reference") -> dict[str, object]:
    refs: dict[str, object] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            row = json.loads(line)
            refs[row["sample_id"]] = row[key]
    return refs


def drop_future_sentence(text: str) -> str:
    """Three-sentence variant: scene, current gaze, rationale."""
    sentences = split_sentences(text)
    if len(sentences) == 4:
        sentences = sentences[:2] + sentences[3:]
    return " ".join(sentences)


def stage_evaluate(config: PipelineConfig, store: Optional[Store] = None) -> dict:
    """Score candidates against the reference captions and write the report."""
    store = store or open_store(config)
    _guard_stage(store, "evaluate", config.force)
    if not config.references:
        raise PrerequisiteError("evaluate needs a references file (references=...)")
    references = _load_references(config.references)
    gaz = load_gazetteer(config)
    synonyms = load_synonyms(config)

    scope = [
        rec for rec in store.records.values()
        if config.eval_split == "all" or rec.split == config.eval_split
    ]
    if not scope:
        raise PrerequisiteError(f"no samples in eval scope {config.eval_split!r}")

    per_sample: dict[str, dict[str, float]] = {}
    for rec in scope:
        if config.skip_human_refinement:
            if rec.caption_draft is None:
                raise PrerequisiteError(
                    f"missing draft caption for {rec.sample_id}; run the draft stage"
                )
            candidate = rec.caption_draft.raw_text
        else:
            if rec.caption_refined is None:
                raise PrerequisiteError(
                    f"missing refined caption for {rec.sample_id}; run the review step "
                    "or evaluate with skip_human_refinement"
                )
            candidate = rec.caption_refined.raw_text
        if rec.sample_id not in references:
            raise PrerequisiteError(f"no reference caption for {rec.sample_id}")
        reference = str(references[rec.sample_id])
        if config.drop_future_gaze:
            candidate = drop_future_sentence(candidate)
            reference = drop_future_sentence(reference)
        per_sample[rec.sample_id] = score_caption_pair(
            candidate, reference, synonym_table=synonyms, gazetteer=gaz, omega=config.omega
        )

    ratings = [r for rec in scope for r in rec.ratings]
    system_id = config.system_id
    if config.skip_human_refinement:
        system_id += "+skip_human_refinement"
    if config.drop_future_gaze:
        system_id += "+drop_future_gaze"
    report = aggregate_report(per_sample, ratings or None, system_id)
    out_dir = Path(config.store_dir)
    write_report_json(report, out_dir / "report.json")
    write_report_csv(report, out_dir / "report.csv")

    probe_out = None
    if config.probe_references:
        probe_refs = _load_references(config.probe_references, key="answers")
        probe_scores = {}
        for rec in scope:
            if rec.probe is None or rec.sample_id not in probe_refs:
                continue
            probe_scores[rec.sample_id] = score_probe_set(
                list(rec.probe.answers), list(probe_refs[rec.sample_id]),
                synonym_table=synonyms, gazetteer=gaz, omega=config.omega,
            )
        if probe_scores:
            probe_report = aggregate_report(probe_scores, None, system_id + "+probe")
            write_report_json(probe_report, out_dir / "probe_report.json")
            write_report_csv(probe_report, out_dir / "probe_report.csv")
            probe_out = probe_report.corpus_means
    store.set_config_echo(config.echo_dict())
    store.mark_stage_completed("evaluate")
    store.save()
    return {
        "system_id": report.system_id,
        "corpus_means": report.corpus_means,
        "human_score": report.human_score,
        "samples": len(per_sample),
        "probe_corpus_means": probe_out,
    }


def stage_lora_sim(config: PipelineConfig, store: Optional[Store] = None) -> dict:
    """Run the toy adapter trainer with a named preset and write the trace."""
    store = store or open_store(config)
    _guard_stage(store, "lora-sim", config.force)
    preset = dict(PRESETS[config.lora_preset])
    rank = config.lora_rank or preset["rank"]
    alpha = config.lora_alpha or preset["alpha"]
    # Toy dims: vocabulary 12, identity embeddings; rank capped by the dims.
    vocab = 12
    toy_rank = max(1, min(rank, vocab) // 4) if rank > vocab else rank
    train_cfg = TrainConfig(
        learning_rate=preset["learning_rate"],
        batch_size=preset["batch_size"],
        max_epochs=preset["max_epochs"],
        patience=preset["patience"],
        clip_norm=1.0,
        lr_schedule="cosine",
        seed=config.split_seed,
    )
    dataset = make_synthetic_dataset(vocab, n_train=96, n_val=8, seq_len=20,
                                     seed=config.split_seed)
    # Identity embeddings scaled up so the preset's small learning rate still
    # produces super-tolerance validation movement across the whole schedule.
    trace = train_toy(train_cfg, dataset, (vocab, vocab, vocab),
                      (toy_rank, float(alpha) * toy_rank / rank, preset["dropout_rate"]),
                      embed_scale=32.0)
    out_dir = Path(config.store_dir)
    trace.to_csv(out_dir / f"lora_trace_{config.lora_preset}.csv")
    trace.to_json(out_dir / f"lora_summary_{config.lora_preset}.json")
    store.set_config_echo(config.echo_dict())
    store.mark_stage_completed("lora-sim")
    store.save()
    return {
        "preset": config.lora_preset,
        "configured_rank": rank,
        "configured_alpha": alpha,
        "toy_rank": toy_rank,
        "stop_epoch": trace.stop_epoch,
        "stop_reason": trace.stop_reason,
        "final_lr": trace.epochs[-1].lr,
    }


def stage_export(config: PipelineConfig, store: Optional[Store] = None) -> dict:
    store = store or open_store(config)
    _guard_stage(store, "export", config.force)
    exported = store.export_refined(Path(config.store_dir) / "export")
    if not exported:
        raise PrerequisiteError("nothing to export: no approved captions yet")
    store.set_config_echo(config.echo_dict())
    store.mark_stage_completed("export")
    store.save()
    return {"exported": len(exported)}


def run_all(config: PipelineConfig, serve_callback=None) -> dict:
    """ingest -> select -> draft -> (human step or scripted refinements or skip)
    -> evaluate. Offline-deterministic with the replay transport."""
    results = {}
    client = make_client(config)  # endpoint misconfiguration fails before any stage
    store = open_store(config)
    results["ingest"] = stage_ingest(config, store)
    results["select"] = stage_select(config, store)
    results["draft"] = stage_draft(config, store, client)
    if config.probe:
        results["probe"] = stage_probe(config, store, client)
    if config.refinements:
        results["refined"] = apply_refinements(config, store)
        store.save()
    elif not config.skip_human_refinement:
        if serve_callback is None:
            raise PrerequisiteError(
                "human refinement step requires the review service (or pass "
                "skip_human_refinement / a refinements file)"
            )
        serve_callback(store)
    results["evaluate"] = stage_evaluate(config, store)
    return results


STAGE_RUNNERS = {
    "ingest": stage_ingest,
    "select": stage_select,
    "draft": stage_draft,
    "probe": stage_probe,
    "evaluate": stage_evaluate,
    "lora-sim": stage_lora_sim,
    "export": stage_export,
}
