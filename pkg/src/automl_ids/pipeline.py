"""File-backed pipeline stages chained by content digests.

Every stage reads its inputs from the output directory, verifies them
against the manifest and writes its own artifacts with the digests of the
inputs they were derived from. The full pipeline is the stages run in order.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodp import apply_normalization, balance, compute_balance_plan, fit_normalization
from .autodp.normalize import NormalizationPlan
from .autofs import apply_mask, autofs_swarm_config, mask_from_dict, mask_to_dict, run_oip_autofs, write_selection_report
from .config import ConfigError, PipelineConfig
from .dataset import (
    DataError,
    DataTable,
    align_labels,
    class_distribution,
    load_csv,
    load_features,
    stratified_sample,
    train_test_split,
    write_csv,
)
from .evaluation import build_report, calibration_bins, emit_report, measure_times, time_inference
from .feature_scoring import FeatureImportance, information_gain
from .gbdt import deserialize, model_size_bytes, serialize, train
from .mopso import write_trace
from .opce_cash import CandidateConfig, cash_swarm_config, choice_to_dict, run_opce_cash, write_cash_trace

MANIFEST = "manifest.json"
CONFIG = "config.json"
TRAIN_CSV = "data/train.csv"
TEST_CSV = "data/test.csv"
BALANCED_CSV = "data/train_balanced.csv"
NORMALIZATION = "plans/normalization.json"
BALANCE = "plans/balance.json"
IMPORTANCE = "features/importance.csv"
MASK = "features/mask.json"
SELECTION = "features/selection.csv"
AUTOFS_TRACE = "search/autofs_trace.csv"
CASH_TRACE = "search/cash_trace.csv"
CHOICE = "model/choice.json"
MODEL = "model/model.json"
TIMING = "model/timing.json"
PREDICTIONS = "report/predictions.csv"
CALIBRATION = "report/calibration.csv"
REPORT_JSON = "report/report.json"
REPORT_MD = "report/report.md"

# the core artifacts a full run must leave behind
ARTIFACTS = (NORMALIZATION, BALANCE, IMPORTANCE, MASK, CASH_TRACE, MODEL, REPORT_JSON)

# files whose content includes wall-clock measurements; never digested
VOLATILE = (CASH_TRACE, TIMING, REPORT_JSON, REPORT_MD)
TIMING_COLUMNS = {CASH_TRACE: ("t_raw_ms",)}

STAGES = ("split", "preprocess", "score-features", "autofs", "cash", "train", "evaluate")


class ChainError(DataError):
    """An artifact is missing, has the wrong format or was derived from different inputs."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class SealedLabels:
    """Held-out labels that record every read.

    Only the evaluation stage is expected to call :meth:`reveal`; ``reads``
    lets callers check that.
    """

    def __init__(self, labels: np.ndarray, reads: list[str]):
        self._labels = np.asarray(labels)
        self.reads = reads

    def __len__(self) -> int:
        return int(self._labels.size)

    def reveal(self, stage: str) -> np.ndarray:
        self.reads.append(stage)
        return self._labels


@dataclass
class RunLog:
    stages: list[str] = field(default_factory=list)
    label_reads: list[str] = field(default_factory=list)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Workspace:
    """An output directory plus its manifest of digests and upstream links."""

    def __init__(self, root, log: RunLog | None = None):
        self.root = Path(root)
        self.log = log or RunLog()

    def path(self, rel: str) -> Path:
        return self.root / rel

    def manifest(self) -> dict:
        p = self.path(MANIFEST)
        return json.loads(p.read_text(encoding="utf-8")) if p.is_file() else {}

    def _save_manifest(self, doc: dict) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.path(MANIFEST).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def upstream(self, *rels: str) -> dict[str, str]:
        return {r: self.require(r) for r in rels}

    def record(self, rel: str, upstream: dict[str, str]) -> None:
        doc = self.manifest()
        doc[rel] = {"sha256": None if rel in VOLATILE else sha256_file(self.path(rel)), "upstream": upstream}
        self._save_manifest(doc)

    def require(self, rel: str) -> str:
        """Digest of ``rel`` after checking it against the manifest and its own inputs."""
        p = self.path(rel)
        if not p.is_file():
            raise ChainError(f"missing artifact {rel}; run the stage that produces it first")
        entry = self.manifest().get(rel)
        if entry is None:
            raise ChainError(f"{rel} is not recorded in {MANIFEST}")
        digest = sha256_file(p)
        if entry["sha256"] is not None and entry["sha256"] != digest:
            raise ChainError(f"{rel} changed after it was written")
        for up, want in entry["upstream"].items():
            if not self.path(up).is_file() or sha256_file(self.path(up)) != want:
                raise ChainError(f"{rel} was derived from a different {up}")
        return digest

    def write_json(self, rel: str, doc: dict, upstream: dict[str, str]) -> None:
        p = self.path(rel)
        p.parent.mkdir(parents=True, exist_ok=True)
        doc = dict(doc)
        doc["upstream"] = upstream
        p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self.record(rel, upstream)

    def read_json(self, rel: str, fmt: str | None = None) -> dict:
        self.require(rel)
        doc = json.loads(self.path(rel).read_text(encoding="utf-8"))
        if fmt is not None and doc.get("format") != fmt:
            raise ChainError(f"{rel}: expected format {fmt!r}, found {doc.get('format')!r}")
        return doc


def _stage(name: str):
    def wrap(fn):
        def run(cfg: PipelineConfig, ws: Workspace, *args, **kwargs):
            ws.log.stages.append(name)
            try:
                return fn(cfg, ws, *args, **kwargs)
            except (StageError, ConfigError):
                raise
            except (DataError, FileNotFoundError) as exc:
                what = "file not found: " if isinstance(exc, FileNotFoundError) else ""
                raise exc.__class__(f"[{name}] {what}{exc}") from exc
            except Exception as exc:  # noqa: BLE001 - tagged and re-raised
                raise StageError(name, exc) from exc
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


@_stage("split")
def stage_split(cfg: PipelineConfig, ws: Workspace) -> None:
    if not cfg.dataset:
        raise DataError("no dataset given")
    table = load_csv(cfg.dataset, cfg.label_column)
    if cfg.sample_fraction < 1.0:
        table = stratified_sample(table, cfg.sample_fraction, cfg.stage_seed("sample"))
    train_t, test_t = train_test_split(table, cfg.test_fraction, cfg.stage_seed("split"))
    write_csv(train_t, ws.path(TRAIN_CSV), cfg.label_column)
    write_csv(test_t, ws.path(TEST_CSV), cfg.label_column)
    ws.record(TRAIN_CSV, {})
    ws.record(TEST_CSV, {})
    settings = {k: v for k, v in cfg.to_dict().items() if k not in ("out", "threads")}
    ws.path(CONFIG).write_text(json.dumps(settings, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@_stage("preprocess")
def stage_preprocess(cfg: PipelineConfig, ws: Workspace) -> None:
    up = ws.upstream(TRAIN_CSV)
    train_t = load_csv(ws.path(TRAIN_CSV), cfg.label_column)
    plan = fit_normalization(train_t, seed=cfg.stage_seed("normalize"), alpha=cfg.sw_alpha)
    ws.write_json(NORMALIZATION, plan.to_dict(), up)
    normalized = apply_normalization(plan, train_t)
    bplan = compute_balance_plan(class_distribution(normalized))
    ws.write_json(BALANCE, {**bplan.to_dict(), "label_names": list(train_t.label_names)}, up)
    balanced = balance(normalized, bplan, k=cfg.k_neighbors, seed=cfg.stage_seed("balance"), smote_ratio=cfg.smote_ratio)
    write_csv(balanced, ws.path(BALANCED_CSV), cfg.label_column)
    ws.record(BALANCED_CSV, ws.upstream(NORMALIZATION, BALANCE))


def _load_balanced(cfg: PipelineConfig, ws: Workspace) -> DataTable:
    ws.require(BALANCED_CSV)
    labels = ws.read_json(BALANCE)["label_names"]
    return align_labels(load_csv(ws.path(BALANCED_CSV), cfg.label_column), labels)


@_stage("score-features")
def stage_score_features(cfg: PipelineConfig, ws: Workspace) -> None:
    imp = information_gain(_load_balanced(cfg, ws), cfg.ig_bins)
    imp.write_csv(ws.path(IMPORTANCE))
    ws.record(IMPORTANCE, ws.upstream(BALANCED_CSV))


@_stage("autofs")
def stage_autofs(cfg: PipelineConfig, ws: Workspace) -> None:
    up = ws.upstream(IMPORTANCE)
    imp = FeatureImportance.read_csv(ws.path(IMPORTANCE))
    res = run_oip_autofs(None, imp, autofs_swarm_config(imp.normalized.size, **cfg.swarm_settings("autofs")))
    ws.write_json(MASK, mask_to_dict(res.mask, imp.feature_names), up)
    write_selection_report(res.mask, imp, ws.path(SELECTION))
    ws.record(SELECTION, up)
    write_trace(res.history, ws.path(AUTOFS_TRACE), ("importance", "feature_fraction"))
    ws.record(AUTOFS_TRACE, up)


def _load_mask(ws: Workspace):
    mask, names = mask_from_dict(ws.read_json(MASK))
    return mask, names


def _selected_training(cfg: PipelineConfig, ws: Workspace) -> DataTable:
    table = _load_balanced(cfg, ws)
    mask, names = _load_mask(ws)
    if tuple(names) != table.feature_names:
        raise ChainError("mask was computed for a different feature set")
    return apply_mask(table, mask)


@_stage("cash")
def stage_cash(cfg: PipelineConfig, ws: Workspace) -> None:
    up = ws.upstream(BALANCED_CSV, MASK)
    table = _selected_training(cfg, ws)
    space = cfg.search_space()
    res = run_opce_cash(
        table, space, cash_swarm_config(space, **cfg.swarm_settings("cash")),
        seed=cfg.stage_seed("cash"), cv_folds=cfg.cv_folds, latency=cfg.latency_mode,
        threads=cfg.threads, refit=False,
    )
    write_cash_trace(res.trace, ws.path(CASH_TRACE))
    ws.record(CASH_TRACE, up)
    ws.write_json(CHOICE, choice_to_dict(res, cfg.latency_mode), up)


@_stage("train")
def stage_train(cfg: PipelineConfig, ws: Workspace) -> None:
    up = ws.upstream(BALANCED_CSV, MASK, CHOICE)
    table = _selected_training(cfg, ws)
    choice = CandidateConfig.from_dict(ws.read_json(CHOICE)["config"])
    train_time, _, model = measure_times(lambda: train(table, choice.hyperparams, choice.learner_kind, cfg.stage_seed("train")))
    ws.path(MODEL).parent.mkdir(parents=True, exist_ok=True)
    ws.path(MODEL).write_bytes(serialize(model))
    ws.record(MODEL, up)
    # accuracy on the raw training split, the figure `predict` reproduces on data/train.csv
    names, matrix, raw = load_features(ws.path(TRAIN_CSV), cfg.label_column)
    pred = np.argmax(model.predict_proba(prepare_features(ws, names, matrix)), axis=1)
    acc = float(np.mean([model.label_names[i] == t for i, t in zip(pred, raw)]))
    ws.write_json(TIMING, {"train_time_s": train_time, "train_accuracy": acc}, ws.upstream(MODEL, TRAIN_CSV))


def load_model(ws: Workspace):
    ws.require(MODEL)
    return deserialize(ws.path(MODEL).read_bytes())


def prepare_features(ws: Workspace, names, matrix: np.ndarray) -> np.ndarray:
    """Raw CSV columns to model inputs: reorder by name, normalize, mask."""
    plan = NormalizationPlan.from_dict(ws.read_json(NORMALIZATION))
    mask, mask_names = _load_mask(ws)
    if tuple(mask_names) != plan.feature_names:
        raise ChainError("mask and normalization plan disagree on features")
    col = {n: i for i, n in enumerate(names)}
    missing = [n for n in plan.feature_names if n not in col]
    if missing:
        raise DataError(f"input lacks features {missing[:5]}")
    X = plan.transform(matrix[:, [col[n] for n in plan.feature_names]])
    return X[:, mask.indices]


def write_predictions(path, label_names, proba: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "prediction", *(f"p_{n}" for n in label_names)])
        for i, row in enumerate(proba):
            w.writerow([i, label_names[int(np.argmax(row))], *(repr(float(v)) for v in row)])


def read_predictions(path, label_names) -> np.ndarray:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        want = [f"p_{n}" for n in label_names]
        if header[2:] != want:
            raise DataError(f"prediction columns {header[2:]} do not match model classes {want}")
        return np.array([[float(v) for v in r[2:]] for r in reader], dtype=np.float64).reshape(-1, len(want))


@_stage("evaluate")
def stage_evaluate(cfg: PipelineConfig, ws: Workspace, predictions=None) -> dict:
    """Score the held-out split; with ``predictions`` the stored probabilities are used instead of the model."""
    up = ws.upstream(TEST_CSV, NORMALIZATION, MASK, MODEL)
    model = load_model(ws)
    names, matrix, raw_labels = load_features(ws.path(TEST_CSV), cfg.label_column)
    if raw_labels is None:
        raise DataError(f"{TEST_CSV} has no {cfg.label_column!r} column")
    X = prepare_features(ws, names, matrix)
    if predictions is None:
        test_ms = time_inference(model.predict_proba, X) * 1e3
        proba = model.predict_proba(X)
        write_predictions(ws.path(PREDICTIONS), model.label_names, proba)
        ws.record(PREDICTIONS, up)
    else:
        proba = read_predictions(predictions, model.label_names)
        if proba.shape[0] != X.shape[0]:
            raise DataError(f"{proba.shape[0]} predictions for {X.shape[0]} test rows")
        test_ms = 0.0
    index = {n: i for i, n in enumerate(model.label_names)}
    unknown = sorted(set(raw_labels) - set(index))
    if unknown:
        raise DataError(f"test labels not seen in training: {unknown}")
    sealed = SealedLabels(np.array([index[s] for s in raw_labels], dtype=np.int64), ws.log.label_reads)
    y = sealed.reveal("evaluate")
    timing = json.loads(ws.path(TIMING).read_text(encoding="utf-8")) if ws.path(TIMING).is_file() else {}
    report = build_report(
        y, proba, model.label_names,
        train_time_s=timing.get("train_time_s", 0.0),
        test_time_per_sample_ms=test_ms,
        model_size_bytes=model_size_bytes(model),
        seed=cfg.seed,
        config_digest=cfg.digest(),
    )
    calibration_bins(proba, np.argmax(proba, axis=1), y).write_csv(ws.path(CALIBRATION))
    ws.record(CALIBRATION, up)
    doc = report.to_dict()
    doc["upstream"] = up
    emit_report(report, ws.path(REPORT_JSON))
    ws.path(REPORT_JSON).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    ws.record(REPORT_JSON, up)
    ws.record(REPORT_MD, up)
    return doc


def predict_csv(cfg: PipelineConfig, ws: Workspace, input_csv, output_csv) -> float | None:
    """Score a new CSV; returns accuracy when it carries known labels."""
    model = load_model(ws)
    names, matrix, raw_labels = load_features(input_csv, cfg.label_column)
    proba = model.predict_proba(prepare_features(ws, names, matrix))
    write_predictions(output_csv, model.label_names, proba)
    if raw_labels is None:
        return None
    pred = [model.label_names[i] for i in np.argmax(proba, axis=1)]
    return float(np.mean([p == t for p, t in zip(pred, raw_labels)])) if pred else 0.0


def run_pipeline(cfg: PipelineConfig, out=None) -> tuple[dict, RunLog]:
    ws = Workspace(out or cfg.out)
    stage_split(cfg, ws)
    stage_preprocess(cfg, ws)
    stage_score_features(cfg, ws)
    stage_autofs(cfg, ws)
    stage_cash(cfg, ws)
    stage_train(cfg, ws)
    report = stage_evaluate(cfg, ws)
    return report, ws.log


def strip_timing_text(rel: str, text: str) -> str:
    """Artifact text with wall-clock fields removed, for run-to-run comparison."""
    if rel.endswith(".json"):
        doc = json.loads(text)
        for k in ("train_time_s", "test_time_per_sample_ms"):
            doc.pop(k, None)
        return json.dumps(doc, sort_keys=True)
    if rel == REPORT_MD:
        rows = [r.split("|") for r in text.splitlines()]
        timing_cols = [i for i, c in enumerate(rows[0]) if "Time" in c]
        return "\n".join("|".join(c for i, c in enumerate(r) if i not in timing_cols) for r in rows)
    drop = TIMING_COLUMNS.get(rel)
    if drop:
        rows = list(csv.reader(text.splitlines()))
        keep = [i for i, c in enumerate(rows[0]) if c not in drop]
        return "\n".join(",".join(r[i] for i in keep) for r in rows)
    return text
