"""Seeded experiment pipelines: pretrain -> stream -> metrics, ablation
grids, parameter sweeps and artifact writing."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ingest, stream, trainer
from .autodiff import ContractViolation, make_optimizer
from .batch import LabeledBatch
from .config import ContinualConfig, DatasetConfig, ExperimentConfig
from .encoder import Encoder, EncoderConfig
from .metrics import MetricsLedger
from .stream import StreamSampler, write_manifest

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "method", "dataset", "n_seeds",
    "base_f1_final_mean", "base_f1_final_std",
    "new_f1_final_mean", "new_f1_final_std",
    "overall_f1_final_mean", "overall_f1_final_std",
    "base_f1_traj_mean", "base_f1_traj_std",
    "new_f1_traj_mean", "new_f1_traj_std",
    "overall_f1_traj_mean", "overall_f1_traj_std",
    "forgetting_final_mean", "forgetting_final_std",
    "intransigence_final_mean", "intransigence_final_std",
]


@dataclass
class RunResult:
    dataset: str
    method: str
    seed: int
    status: str = "ok"
    error: str = ""
    base_f1_final: float | None = None
    new_f1_final: float | None = None
    overall_f1_final: float | None = None
    base_f1_traj: float | None = None
    new_f1_traj: float | None = None
    overall_f1_traj: float | None = None
    forgetting_final: float | None = None
    intransigence_final: float | None = None
    reference_scores: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def build_dataset(dcfg: DatasetConfig) -> stream.Dataset:
    if dcfg.kind == "synthetic":
        spec = ingest.SyntheticSpec(
            n_classes=dcfg.n_classes, channels=dcfg.channels, timesteps=dcfg.timesteps,
            train_per_class=dcfg.train_per_class, test_per_class=dcfg.test_per_class,
            mean_scale=dcfg.mean_scale, class_std=dcfg.class_std,
            drift_per_sample=dcfg.drift_per_sample, seed=dcfg.seed)
        return ingest.synth(spec)
    spec = (ingest.WindowingSpec.preset(dcfg.preset) if dcfg.preset
            else ingest.WindowingSpec(dcfg.window_s, dcfg.step_s))
    rate = dcfg.sample_rate_hz or None

    def load(paths) -> LabeledBatch:
        parts = [ingest.segment(ingest.read_recording(p, sample_rate_hz=rate), spec)
                 for p in sorted(paths)]
        return LabeledBatch.concat(parts)

    return stream.Dataset(train=load(dcfg.train_files), test=load(dcfg.test_files))


def _encoder_config(exp: ExperimentConfig, dcfg: DatasetConfig,
                    dataset: stream.Dataset) -> EncoderConfig:
    channels, timesteps = dataset.train.window_shape
    e = exp.encoder
    return EncoderConfig(channels=channels, timesteps=timesteps,
                         embedding_dim=e.embedding_dim, hidden=tuple(e.hidden),
                         arch=e.arch, conv_filters=e.conv_filters,
                         kernel_size=e.kernel_size, activation=e.activation)


def _prepared_split(exp: ExperimentConfig, dcfg: DatasetConfig, seed: int):
    dataset = build_dataset(dcfg)
    split = stream.make_split(dataset, n_base=exp.split.n_base,
                              fraction=exp.split.fraction, seed=[seed, 11])
    if dcfg.normalize:
        (pretrain, pool, test_base, test_new), _ = ingest.normalize(
            split.pretrain, split.pool, split.test_base, split.test_new)
        split = dataclasses.replace(split, pretrain=pretrain, pool=pool,
                                    test_base=test_base, test_new=test_new)
    return dataset, split


def run_single(exp: ExperimentConfig, dcfg: DatasetConfig, method: str, seed: int,
               out_dir: Path | None = None,
               reference_scores: dict[int, float] | None = None,
               continual_override: ContinualConfig | None = None) -> RunResult:
    """Execute one (dataset, method, seed) pipeline and write its artifacts."""
    result = RunResult(dataset=dcfg.name, method=method, seed=seed)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    dataset, split = _prepared_split(exp, dcfg, seed)
    enc_cfg = _encoder_config(exp, dcfg, dataset)
    suite = trainer.EvalSuite(base_classes=split.base_classes,
                              new_classes=split.new_classes,
                              test_base=split.test_base, test_new=split.test_new)
    ccfg = continual_override if continual_override is not None else exp.continual
    if method != "offline":
        ccfg = ccfg.with_method(method)
    ccfg = dataclasses.replace(ccfg, seed=seed)

    encoder = Encoder.init(enc_cfg, seed=[seed, 17])

    if method == "offline":
        # upper bound: episodic training on every class and all training data
        full_train = LabeledBatch.concat([split.pretrain, split.pool])
        state = trainer.offline_pretrain(
            encoder, full_train, exp.pretrain,
            replay_capacity=ccfg.replay_capacity, seed=seed,
            base_classes=split.all_classes)
        record = trainer.evaluate(state.encoder, state.memory, suite, step=0)
        ledger = MetricsLedger(split.base_classes, split.new_classes)
        ledger.add(record)
        result.reference_scores = {str(c): v for c, v in sorted(record.per_class.items())}
    else:
        state = trainer.offline_pretrain(
            encoder, split.pretrain, exp.pretrain,
            replay_capacity=ccfg.replay_capacity, seed=seed,
            base_classes=split.base_classes)
        state.optimizer = make_optimizer(
            state.encoder.params, ccfg.learning_rate, ccfg.optimizer)
        sampler = StreamSampler(split.pool, split.pool_ids,
                                batch_size=ccfg.batch_size, seed=[seed, 29])
        ledger = MetricsLedger(split.base_classes, split.new_classes,
                               reference_scores=reference_scores)
        manifest: list = []
        ledger = trainer.run(state, sampler, ccfg, suite, ledger=ledger,
                             snapshot_dir=out_dir, manifest=manifest)
        if out_dir is not None:
            write_manifest(out_dir / "stream_manifest.json", manifest)

    final = ledger.final()
    result.base_f1_final = final.base_f1
    result.new_f1_final = final.new_f1
    result.overall_f1_final = final.overall_f1
    result.base_f1_traj = ledger.trajectory_mean("base_f1")
    result.new_f1_traj = ledger.trajectory_mean("new_f1")
    result.overall_f1_traj = ledger.trajectory_mean("overall_f1")
    result.forgetting_final = final.forgetting
    result.intransigence_final = final.intransigence
    if out_dir is not None:
        ledger.to_jsonl(out_dir / "steps.jsonl")
    return result


def _worker(args) -> RunResult:
    exp, dcfg, method, seed, out_dir, refs, override = args
    try:
        return run_single(exp, dcfg, method, seed, out_dir=out_dir,
                          reference_scores=refs, continual_override=override)
    except Exception as exc:  # flag the partial run, keep the experiment going
        log.error("run (%s, %s, seed %d) failed: %s", dcfg.name, method, seed, exc)
        return RunResult(dataset=dcfg.name, method=method, seed=seed,
                         status="failed", error=f"{exc}\n{traceback.format_exc()}")


def _execute(tasks: list, workers: int) -> list[RunResult]:
    if workers <= 1 or len(tasks) <= 1:
        return [_worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_worker, tasks))


def run_experiment(exp: ExperimentConfig, out_root: Path | None = None) -> Path:
    """Fan out (dataset x method x seed), aggregate a summary table.

    The all-data offline model is always trained per (dataset, seed) to
    provide the intransigence reference, whether or not 'offline' is a
    configured method row.
    """
    violations = exp.violations()
    if violations:
        raise ContractViolation("invalid experiment config: " + "; ".join(violations))
    out_root = Path(out_root) if out_root is not None else exp.resolved_output_dir()
    out_root.mkdir(parents=True, exist_ok=True)

    offline_tasks = [
        (exp, dcfg, "offline", seed,
         out_root / dcfg.name / "offline" / f"seed_{seed}", None, None)
        for dcfg in exp.datasets for seed in exp.seeds
    ]
    offline_results = {(r.dataset, r.seed): r for r in _execute(offline_tasks, exp.workers)}

    tasks = []
    for dcfg in exp.datasets:
        for method in exp.methods:
            if method == "offline":
                continue
            for seed in exp.seeds:
                ref = offline_results[(dcfg.name, seed)].reference_scores
                refs = {int(c): v for c, v in ref.items()} if ref else None
                tasks.append((exp, dcfg, method, seed,
                              out_root / dcfg.name / method / f"seed_{seed}", refs, None))
    results = list(offline_results.values()) if "offline" in exp.methods else []
    results += _execute(tasks, exp.workers)

    failed = [r for r in results if r.status != "ok"]
    for r in failed:
        log.error("partial artifacts for (%s, %s, seed %d): %s",
                  r.dataset, r.method, r.seed, r.error.splitlines()[0])

    results.sort(key=lambda r: (r.dataset, r.method, r.seed))
    with open(out_root / "runs.json", "w") as fh:
        json.dump({"methods": exp.methods, "datasets": [d.name for d in exp.datasets],
                   "runs": [r.to_json() for r in results]},
                  fh, indent=1, sort_keys=True)
        fh.write("\n")
    write_summary(out_root / "summary.csv", results, exp.methods,
                  [d.name for d in exp.datasets])
    if failed:
        raise RuntimeError(f"{len(failed)} of {len(results)} runs failed; "
                           f"partial artifacts flagged in {out_root / 'runs.json'}")
    return out_root


def _fmt(value) -> str:
    return "" if value is None else f"{value:.6f}"


def _mean_std(values: list) -> tuple[float | None, float | None]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    mean = float(np.mean(vals))
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return mean, std


def write_summary(path: Path, results: list[RunResult], methods: list[str],
                  datasets: list[str]):
    """Method x dataset rows with mean +- std over seeds, final and
    trajectory-mean variants side by side."""
    rows = []
    for method in methods:
        for dataset in datasets:
            group = [r for r in results
                     if r.method == method and r.dataset == dataset and r.status == "ok"]
            row = {"method": method, "dataset": dataset, "n_seeds": str(len(group))}
            for col, attr in (("base_f1_final", "base_f1_final"),
                              ("new_f1_final", "new_f1_final"),
                              ("overall_f1_final", "overall_f1_final"),
                              ("base_f1_traj", "base_f1_traj"),
                              ("new_f1_traj", "new_f1_traj"),
                              ("overall_f1_traj", "overall_f1_traj"),
                              ("forgetting_final", "forgetting_final"),
                              ("intransigence_final", "intransigence_final")):
                mean, std = _mean_std([getattr(r, attr) for r in group])
                row[f"{col}_mean"] = _fmt(mean)
                row[f"{col}_std"] = _fmt(std)
            rows.append(row)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def rebuild_summary(out_root: Path) -> Path:
    """Recreate summary.csv from a previous run's runs.json."""
    runs_path = Path(out_root) / "runs.json"
    if not runs_path.exists():
        raise ContractViolation(f"{runs_path} not found; run an experiment first")
    with open(runs_path) as fh:
        raw = json.load(fh)
    results = [RunResult(**entry) for entry in raw["runs"]]
    write_summary(Path(out_root) / "summary.csv", results, raw["methods"], raw["datasets"])
    return Path(out_root) / "summary.csv"


SWEEPABLE = {"margin", "refresh_ratio"}


def run_sweep(exp: ExperimentConfig, param: str, values: list[float],
              out_root: Path | None = None, method: str = "lapnet") -> Path:
    """Rerun one method across a grid of one continual hyperparameter."""
    if param not in SWEEPABLE:
        raise ContractViolation(f"sweep parameter must be one of {sorted(SWEEPABLE)}")
    violations = exp.violations()
    if violations:
        raise ContractViolation("invalid experiment config: " + "; ".join(violations))
    out_root = Path(out_root) if out_root is not None else exp.resolved_output_dir()
    out_root.mkdir(parents=True, exist_ok=True)
    tasks = []
    for dcfg in exp.datasets:
        for value in values:
            override = dataclasses.replace(exp.continual, **{param: value})
            override = override.with_method(method)
            bad = override.violations()
            if bad:
                raise ContractViolation(f"sweep value {value}: " + "; ".join(bad))
            for seed in exp.seeds:
                tasks.append((exp, dcfg, method, seed,
                              out_root / dcfg.name / f"{param}_{value:g}" / f"seed_{seed}",
                              None, override))
    results = _execute(tasks, exp.workers)
    failed = [r for r in results if r.status != "ok"]
    if failed:
        raise RuntimeError(f"{len(failed)} sweep runs failed: "
                           + "; ".join(f"({r.dataset}, seed {r.seed})" for r in failed))

    path = out_root / f"sweep_{param}.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "param", "value",
                         "base_f1_final_mean", "base_f1_final_std",
                         "new_f1_final_mean", "new_f1_final_std",
                         "overall_f1_final_mean", "overall_f1_final_std"])
        for dcfg in exp.datasets:
            for value in values:
                # tasks and results align one-to-one by construction
                group = [r for t, r in zip(tasks, results)
                         if t[1].name == dcfg.name and getattr(t[6], param) == value]
                row = [dcfg.name, param, f"{value:g}"]
                for attr in ("base_f1_final", "new_f1_final", "overall_f1_final"):
                    mean, std = _mean_std([getattr(r, attr) for r in group])
                    row += [_fmt(mean), _fmt(std)]
                writer.writerow(row)
    return path
