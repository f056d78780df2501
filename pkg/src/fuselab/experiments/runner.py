"""End-to-end experiment execution.

One seed builds its corpora, base and fine-tuned models, fusion points,
and measurements; seeds run independently (optionally in parallel, capped
by FUSELAB_THREADS) and their rows merge in seed order. A failing seed
contributes a structured error row and never blocks the others.
"""

from __future__ import annotations

import json
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from fuselab import __version__
from fuselab.datagen.bias import BiasCorpusSpec, make_bias_corpus
from fuselab.datagen.memdata import make_mem_corpora
from fuselab.datagen.shortcuts import (
    ShortcutKind,
    inject_shortcut_mixture,
    inject_shortcuts,
)
from fuselab.datagen.text import make_task_corpus
from fuselab.experiments.config import ExperimentConfig
from fuselab.fisher import (
    build_probe_set,
    empirical_fisher,
    fisher_overlap,
    normalize_unit_trace,
)
from fuselab.fusion import FusionWeights, fuse, interpolate_pair
from fuselab.memorization import alr, perplexity
from fuselab.metrics import UtilizationRecord, accuracy, bias_report, bounds_report
from fuselab.models import Model
from fuselab.rng import Rng
from fuselab.training import init_base, train

# rng stream allocation per seed (text, bundles, probes run on separate streams)
_STREAM_PRETRAIN = 1
_STREAM_CORPUS = 2
_STREAM_BUNDLE = 100  # + kind index
_STREAM_PROBE = 300
_STREAM_EVAL = 400


class RunError(RuntimeError):
    pass


@dataclass(frozen=True)
class ResultRow:
    point_id: str
    metric: str
    dataset_id: str
    value: float
    seed: int
    coord: float | None = None

    def to_dict(self) -> dict:
        return {
            "point_id": self.point_id,
            "metric": self.metric,
            "dataset_id": self.dataset_id,
            "value": self.value,
            "seed": self.seed,
            "coord": self.coord,
        }


@dataclass(frozen=True)
class ErrorRow:
    seed: int
    stage: str
    message: str

    def to_dict(self) -> dict:
        return {"seed": self.seed, "stage": self.stage, "message": self.message}


@dataclass(frozen=True)
class ResultTable:
    rows: tuple[ResultRow, ...]
    errors: tuple[ErrorRow, ...]
    provenance: dict

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance,
            "rows": [r.to_dict() for r in self.rows],
            "errors": [e.to_dict() for e in self.errors],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ResultTable":
        rows = tuple(
            ResultRow(
                r["point_id"], r["metric"], r["dataset_id"], float(r["value"]),
                int(r["seed"]), None if r.get("coord") is None else float(r["coord"]),
            )
            for r in d["rows"]
        )
        errors = tuple(ErrorRow(int(e["seed"]), e["stage"], e["message"]) for e in d["errors"])
        return cls(rows, errors, d["provenance"])


def _train_seed(config: ExperimentConfig, seed: int, index: int) -> int:
    """Per-model training seed, derived so every model of a run differs."""
    return config.train.seed + seed * 1000 + index * 17


def _fit(config: ExperimentConfig, base: Model, data, seed: int, index: int, monitor=None) -> Model:
    cfg = replace(config.train, seed=_train_seed(config, seed, index))
    return train(base, data, cfg, monitor=monitor).model(base.config)


def _fit_plain(config: ExperimentConfig, base: Model, data, seed: int, index: int) -> Model:
    """Fine-tune without an early-stop monitor (used for `full` models).

    `full` models have no stop target, so data.full_epochs can cap their
    budget separately from the monitored fine-tunes.
    """
    epochs = int(config.data.get("full_epochs", config.train.epochs))
    cfg = replace(
        config.train,
        seed=_train_seed(config, seed, index),
        shortcut_acc_target=None,
        epochs=epochs,
    )
    return train(base, data, cfg, monitor=None).model(base.config)


def _shuffled(items: list, rng: Rng) -> list:
    order = rng.generator().permutation(len(items))
    return [items[i] for i in order]


def _acc_rows(
    model: Model, point_id: str, datasets: dict[str, list], seed: int, coord: float | None
) -> tuple[list[ResultRow], dict[str, UtilizationRecord]]:
    rows, records = [], {}
    for dataset_id, data in datasets.items():
        rec = accuracy(model, data, dataset_id=dataset_id)
        records[dataset_id] = rec
        rows.append(ResultRow(point_id, "accuracy", dataset_id, rec.value, seed, coord))
    return rows, records


def _bounds_rows(
    point_id: str,
    individual: dict[str, list[UtilizationRecord]],
    fused: dict[str, UtilizationRecord],
    seed: int,
    coord: float | None,
    metric: str = "accuracy",
) -> list[ResultRow]:
    rows = []
    for dataset_id, fused_rec in fused.items():
        rep = bounds_report(individual[dataset_id], fused_rec)
        rows.extend(
            [
                ResultRow(point_id, f"{metric}:bound_min", dataset_id, rep.minimum, seed, coord),
                ResultRow(point_id, f"{metric}:bound_max", dataset_id, rep.maximum, seed, coord),
                ResultRow(point_id, f"{metric}:within_bounds", dataset_id, float(rep.within), seed, coord),
            ]
        )
    return rows


# ----- per-kind seed workers -------------------------------------------------


def _seed_shortcut_interp(config: ExperimentConfig, seed: int) -> list[ResultRow]:
    rng = Rng(seed)
    text = config.text_spec()
    tokens = config.special_tokens()
    kinds = config.shortcut_kinds()
    shared = config.shared_kind()
    corpus = make_task_corpus(int(config.data.get("corpus_size", 3000)), text, rng.child(_STREAM_CORPUS))
    pre_spec = config.pretrain
    base = _make_base(config, rng)

    small_frac = float(config.data.get("small_frac", 0.2))
    contamination = float(config.data.get("contamination", 0.25))
    if shared is None:
        bundles = [
            inject_shortcuts(corpus, k, tokens[k], small_frac, contamination, rng.child(_STREAM_BUNDLE + i))
            for i, k in enumerate(kinds)
        ]
        monitors = [b.synthetic_val for b in bundles]
        datasets = {}
        for k, b in zip(kinds, bundles):
            datasets[f"synthetic-{k.value}"] = b.synthetic_val
            datasets[f"original-{k.value}"] = b.original_val
    else:
        bundles = [
            inject_shortcut_mixture(
                corpus, [shared, k], {shared: tokens[shared], k: tokens[k]},
                small_frac, contamination, rng.child(_STREAM_BUNDLE),
            )
            for k in kinds
        ]
        monitors = [b.synthetic_val for b in bundles]
        datasets = {}
        for i, (k, b) in enumerate(zip(kinds, bundles)):
            datasets[f"synthetic-{k.value}"] = b.synthetic_vals[k]
            datasets[f"synthetic-{shared.value}-m{i}"] = b.synthetic_vals[shared]
            datasets[f"original-m{i}"] = b.original_val

    models = [
        _fit(config, base, b.train, seed, i, monitor=mon)
        for i, (b, mon) in enumerate(zip(bundles, monitors))
    ]
    full_data = _shuffled(bundles[0].train + bundles[1].train, rng.child(_STREAM_EVAL))
    full = _fit_plain(config, base, full_data, seed, 99)

    rows: list[ResultRow] = []
    base_rows, _ = _acc_rows(base, "base", datasets, seed, None)
    rows.extend(base_rows)
    per_model_records: list[dict[str, UtilizationRecord]] = []
    for k, m in zip(kinds, models):
        model_rows, records = _acc_rows(m, f"model:{k.value}", datasets, seed, None)
        rows.extend(model_rows)
        per_model_records.append(records)
    full_rows, _ = _acc_rows(full, "full", datasets, seed, None)
    rows.extend(full_rows)

    individual = {
        ds: [records[ds] for records in per_model_records] for ds in datasets
    }
    for point in interpolate_pair(models[0].params, models[1].params, config.steps()):
        coord = point.coordinates[1]
        point_model = Model(base.config, point.params)
        point_rows, records = _acc_rows(point_model, f"point:{coord:.6f}", datasets, seed, coord)
        rows.extend(point_rows)
        if 0.0 < coord < 1.0:
            rows.extend(_bounds_rows(f"point:{coord:.6f}", individual, records, seed, coord))
    return rows


def _seed_shortcut_fuse_n(config: ExperimentConfig, seed: int) -> list[ResultRow]:
    rng = Rng(seed)
    text = config.text_spec()
    tokens = config.special_tokens()
    kinds = config.shortcut_kinds()
    corpus = make_task_corpus(int(config.data.get("corpus_size", 3000)), text, rng.child(_STREAM_CORPUS))
    base = _make_base(config, rng)
    small_frac = float(config.data.get("small_frac", 0.2))
    contamination = float(config.data.get("contamination", 0.25))

    bundles = [
        inject_shortcuts(corpus, k, tokens[k], small_frac, contamination, rng.child(_STREAM_BUNDLE + i))
        for i, k in enumerate(kinds)
    ]
    models = [
        _fit(config, base, b.train, seed, i, monitor=b.synthetic_val)
        for i, b in enumerate(bundles)
    ]
    full_data = _shuffled([ex for b in bundles for ex in b.train], rng.child(_STREAM_EVAL))
    full = _fit_plain(config, base, full_data, seed, 99)
    fused = Model(base.config, fuse([m.params for m in models], FusionWeights(config.alphas(len(models)))))

    datasets = {}
    for k, b in zip(kinds, bundles):
        datasets[f"synthetic-{k.value}"] = b.synthetic_val
        datasets[f"original-{k.value}"] = b.original_val

    rows: list[ResultRow] = []
    per_model_records = []
    for point_id, model in [("base", base)] + [
        (f"model:{k.value}", m) for k, m in zip(kinds, models)
    ] + [("full", full)]:
        model_rows, records = _acc_rows(model, point_id, datasets, seed, None)
        rows.extend(model_rows)
        if point_id.startswith("model:"):
            per_model_records.append(records)
    fused_rows, fused_records = _acc_rows(fused, "fused", datasets, seed, None)
    rows.extend(fused_rows)
    individual = {ds: [r[ds] for r in per_model_records] for ds in datasets}
    rows.extend(_bounds_rows("fused", individual, fused_records, seed, None))

    # averaged original-task rows: each model scored on its own original set
    own_originals = [
        per_model_records[i][f"original-{k.value}"].value for i, k in enumerate(kinds)
    ]
    rows.append(ResultRow("models:mean", "accuracy", "original-mean", float(np.mean(own_originals)), seed, None))
    for point_id, model in [("fused", fused), ("full", full), ("base", base)]:
        vals = [accuracy(model, bundles[i].original_val).value for i in range(len(kinds))]
        rows.append(ResultRow(point_id, "accuracy", "original-mean", float(np.mean(vals)), seed, None))
    return rows


def _bias_specs(config: ExperimentConfig, seed: int) -> tuple[list[BiasCorpusSpec], BiasCorpusSpec]:
    attr_a, attr_b = config.data["attrs"]
    skew = float(config.data.get("skew", 0.8))
    size = int(config.data.get("size", 3000))
    eval_size = int(config.data.get("eval_size", 3000))
    target = config.data.get("target_attr", "label")
    specs = [
        BiasCorpusSpec(target, attr_a, skew=skew, balanced_attr=attr_b, size=size, seed=seed * 7919 + 1),
        BiasCorpusSpec(target, attr_b, skew=skew, balanced_attr=attr_a, size=size, seed=seed * 7919 + 2),
    ]
    eval_spec = BiasCorpusSpec(target, attr_a, skew=0.5, balanced_attr=attr_b, size=eval_size, seed=seed * 7919 + 3)
    return specs, eval_spec


def _bias_rows(model: Model, point_id: str, eval_set, attrs, seed, coord) -> tuple[list[ResultRow], dict[str, UtilizationRecord]]:
    rows, records = [], {}
    for attr in attrs:
        rep = bias_report(model, eval_set, attr)
        rows.append(ResultRow(point_id, "dp", attr, rep.dp, seed, coord))
        rows.append(ResultRow(point_id, "gap_rms", attr, rep.gap_rms, seed, coord))
        records[attr] = UtilizationRecord(attr, "bias", rep.dp, "dp")
    acc = accuracy(model, eval_set, dataset_id="eval")
    rows.append(ResultRow(point_id, "accuracy", "eval", acc.value, seed, coord))
    records["eval"] = acc
    return rows, records


def _seed_bias(config: ExperimentConfig, seed: int) -> list[ResultRow]:
    rng = Rng(seed)
    text = config.text_spec()
    attrs = list(config.data["attrs"])
    specs, eval_spec = _bias_specs(config, seed)
    corpora = [make_bias_corpus(s, text) for s in specs]
    eval_set = make_bias_corpus(eval_spec, text)
    base = _make_base(config, rng)
    models = [_fit(config, base, c, seed, i) for i, c in enumerate(corpora)]
    full_data = _shuffled(corpora[0] + corpora[1], rng.child(_STREAM_EVAL))
    full = _fit_plain(config, base, full_data, seed, 99)

    rows: list[ResultRow] = []
    per_model_records = []
    for point_id, model in [("base", base)] + [
        (f"model:{attr}", m) for attr, m in zip(attrs, models)
    ] + [("full", full)]:
        r, records = _bias_rows(model, point_id, eval_set, attrs, seed, None)
        rows.extend(r)
        if point_id.startswith("model:"):
            per_model_records.append(records)
    individual = {key: [r[key] for r in per_model_records] for key in per_model_records[0]}

    if config.kind == "bias-fuse":
        alphas = config.alphas(2)
        fused = Model(base.config, fuse([m.params for m in models], FusionWeights(alphas)))
        fused_rows, fused_records = _bias_rows(fused, "fused", eval_set, attrs, seed, None)
        rows.extend(fused_rows)
        rows.extend(_bounds_rows("fused", {"eval": individual["eval"]}, {"eval": fused_records["eval"]}, seed, None))
        for attr in attrs:
            rep = bounds_report(individual[attr], fused_records[attr])
            rows.append(ResultRow("fused", "dp:bound_min", attr, rep.minimum, seed, None))
            rows.append(ResultRow("fused", "dp:bound_max", attr, rep.maximum, seed, None))
            rows.append(ResultRow("fused", "dp:within_bounds", attr, float(rep.within), seed, None))
    else:
        for point in interpolate_pair(models[0].params, models[1].params, config.steps()):
            coord = point.coordinates[1]
            point_model = Model(base.config, point.params)
            point_rows, records = _bias_rows(point_model, f"point:{coord:.6f}", eval_set, attrs, seed, coord)
            rows.extend(point_rows)
            if 0.0 < coord < 1.0:
                rows.extend(_bounds_rows(f"point:{coord:.6f}", {"eval": individual["eval"]}, {"eval": records["eval"]}, seed, coord))
    return rows


def _seed_memorize(config: ExperimentConfig, seed: int) -> list[ResultRow]:
    rng = Rng(seed)
    data = config.data
    n_models = int(data.get("n_models", 3))
    per_model = int(data.get("per_model", 120))
    shared = int(data.get("shared", 40))
    block_len = int(data.get("block_len", 24))
    vocab = int(data.get("vocab_size", 64))
    n_val = int(data.get("n_validation", per_model))
    bundle = make_mem_corpora(n_models, per_model, shared, block_len, rng.child(_STREAM_CORPUS), vocab, n_val)
    base = _make_base(config, rng)

    names = [chr(ord("A") + i) for i in range(n_models)]
    models = [_fit(config, base, bundle.per_model[i], seed, i) for i in range(n_models)]
    full_data = np.concatenate(bundle.per_model, axis=0)
    full_data = full_data[rng.child(_STREAM_EVAL).generator().permutation(full_data.shape[0])]
    full = _fit_plain(config, base, full_data, seed, 99)
    fused = Model(base.config, fuse([m.params for m in models], FusionWeights(config.alphas(n_models))))

    datasets = {name: bundle.per_model[i][shared:] for i, name in enumerate(names)}
    datasets["shared"] = bundle.shared

    rows: list[ResultRow] = []
    records: dict[str, dict[str, UtilizationRecord]] = {}
    for point_id, model in (
        [("base", base)]
        + [(f"model:{name}", m) for name, m in zip(names, models)]
        + [("fused", fused), ("full", full)]
    ):
        records[point_id] = {}
        for ds_name, blocks in datasets.items():
            value = alr(blocks, model, base)
            rows.append(ResultRow(point_id, "alr", ds_name, value, seed, None))
            records[point_id][ds_name] = UtilizationRecord(ds_name, "memorization", value, "alr")
        ppl = perplexity(model, bundle.validation)
        rows.append(ResultRow(point_id, "perplexity", "validation", ppl, seed, None))
        records[point_id]["validation"] = UtilizationRecord("validation", "memorization", ppl, "perplexity")

    individual = {
        ds: [records[f"model:{name}"][ds] for name in names] for ds in list(datasets) + ["validation"]
    }
    for ds in datasets:
        rep = bounds_report(individual[ds], records["fused"][ds])
        rows.append(ResultRow("fused", "alr:bound_min", ds, rep.minimum, seed, None))
        rows.append(ResultRow("fused", "alr:bound_max", ds, rep.maximum, seed, None))
        rows.append(ResultRow("fused", "alr:within_bounds", ds, float(rep.within), seed, None))
    rep = bounds_report(individual["validation"], records["fused"]["validation"])
    rows.append(ResultRow("fused", "perplexity:bound_min", "validation", rep.minimum, seed, None))
    rows.append(ResultRow("fused", "perplexity:bound_max", "validation", rep.maximum, seed, None))
    rows.append(ResultRow("fused", "perplexity:within_bounds", "validation", float(rep.within), seed, None))
    return rows


def _seed_fisher_overlap(config: ExperimentConfig, seed: int) -> list[ResultRow]:
    rng = Rng(seed)
    text = config.text_spec()
    tokens = config.special_tokens()
    kinds = config.shortcut_kinds()
    corpus = make_task_corpus(int(config.data.get("corpus_size", 3000)), text, rng.child(_STREAM_CORPUS))
    base = _make_base(config, rng)
    small_frac = float(config.data.get("small_frac", 0.2))
    contamination = float(config.data.get("contamination", 0.25))
    n_probe = int(config.data.get("probe_size", 200))

    bundles = [
        inject_shortcuts(corpus, k, tokens[k], small_frac, contamination, rng.child(_STREAM_BUNDLE + i))
        for i, k in enumerate(kinds)
    ]
    models = [
        _fit(config, base, b.train, seed, i, monitor=b.synthetic_val)
        for i, b in enumerate(bundles)
    ]

    probe_src = make_task_corpus(max(3 * n_probe, 600), text, rng.child(_STREAM_PROBE))
    clean_probe = build_probe_set(probe_src, None, tokens[kinds[0]], n=n_probe, rng=rng.child(_STREAM_PROBE + 1))
    reversed_probes = [
        build_probe_set(probe_src, k, tokens[k], n=n_probe, rng=rng.child(_STREAM_PROBE + 2 + i))
        for i, k in enumerate(kinds)
    ]

    clean_fishers = [normalize_unit_trace(empirical_fisher(m, clean_probe, "clean")) for m in models]
    shortcut_fishers = [
        normalize_unit_trace(empirical_fisher(m, p, f"reversed-{k.value}"))
        for m, p, k in zip(models, reversed_probes, kinds)
    ]
    pair = f"pair:{kinds[0].value}-{kinds[1].value}"
    rows = [
        ResultRow(pair, "fisher_overlap", "clean-probes", fisher_overlap(*clean_fishers), seed, None),
        ResultRow(pair, "fisher_overlap", "shortcut-probes", fisher_overlap(*shortcut_fishers), seed, None),
    ]
    for k, b, m in zip(kinds, bundles, models):
        rows.append(ResultRow(f"model:{k.value}", "accuracy", f"synthetic-{k.value}",
                              accuracy(m, b.synthetic_val).value, seed, None))
        rows.append(ResultRow(f"model:{k.value}", "accuracy", f"original-{k.value}",
                              accuracy(m, b.original_val).value, seed, None))
    return rows


def _make_base(config: ExperimentConfig, rng: Rng) -> Model:
    if config.kind == "memorize" or config.pretrain is None:
        return init_base(config.model)
    pre_corpus = make_task_corpus(config.pretrain.size, config.text_spec(), rng.child(_STREAM_PRETRAIN))
    return init_base(config.model, pretrain=pre_corpus, pretrain_cfg=config.pretrain.train)


_SEED_WORKERS = {
    "shortcut-interp": _seed_shortcut_interp,
    "shortcut-fuse-n": _seed_shortcut_fuse_n,
    "bias-interp": _seed_bias,
    "bias-fuse": _seed_bias,
    "memorize": _seed_memorize,
    "fisher-overlap": _seed_fisher_overlap,
}


def run_seed(config: ExperimentConfig, seed: int) -> tuple[list[ResultRow], list[ErrorRow]]:
    """All rows for one seed; failures become one structured error row."""
    try:
        rows = _SEED_WORKERS[config.kind](config, seed)
        for row in rows:
            if not np.isfinite(row.value):
                raise RunError(f"non-finite value in row {row}")
        return rows, []
    except Exception as err:
        stage = f"{config.kind}:seed-{seed}"
        detail = "".join(traceback.format_exception_only(type(err), err)).strip()
        return [], [ErrorRow(seed, stage, detail)]


def _thread_cap() -> int:
    raw = os.environ.get("FUSELAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run(config: ExperimentConfig) -> ResultTable:
    """Execute every seed and assemble the merged, deterministic table."""
    provenance = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "code_version": __version__,
    }
    workers = min(_thread_cap(), len(config.seeds))
    results: dict[int, tuple[list[ResultRow], list[ErrorRow]]] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {seed: pool.submit(run_seed, config, seed) for seed in config.seeds}
            for seed, fut in futures.items():
                results[seed] = fut.result()
    else:
        for seed in config.seeds:
            results[seed] = run_seed(config, seed)

    if config.out_dir is not None:
        staging = Path(config.out_dir) / "staging"
        staging.mkdir(parents=True, exist_ok=True)
        for seed in config.seeds:
            rows, errors = results[seed]
            payload = {
                "rows": [r.to_dict() for r in rows],
                "errors": [e.to_dict() for e in errors],
            }
            with open(staging / f"seed-{seed}.json", "w", encoding="utf-8") as fh:
                json.dump(payload, fh, sort_keys=True)

    all_rows: list[ResultRow] = []
    all_errors: list[ErrorRow] = []
    for seed in config.seeds:
        rows, errors = results[seed]
        all_rows.extend(rows)
        all_errors.extend(errors)
    return ResultTable(tuple(all_rows), tuple(all_errors), provenance)
