"""Classification, confidence, calibration and cost metrics for a trained detector."""
from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

REPORT_FORMAT = "automl-ids/eval-report/v1"
ECE_BINS = 15
TIMING_FIELDS = ("train_time_s", "test_time_per_sample_ms")


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    precision_undefined: bool = False
    recall_undefined: bool = False


@dataclass
class ClassificationMetrics:
    accuracy: float
    precision_weighted: float
    recall_weighted: float
    f1_weighted: float
    per_class: list[ClassMetrics]
    confusion: np.ndarray


@dataclass
class CalibrationBins:
    edges: np.ndarray
    count: np.ndarray
    mean_confidence: np.ndarray
    accuracy: np.ndarray

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lower", "bin_upper", "count", "mean_confidence", "accuracy"])
            for i in range(self.count.size):
                w.writerow([
                    repr(float(self.edges[i])), repr(float(self.edges[i + 1])), int(self.count[i]),
                    repr(float(self.mean_confidence[i])), repr(float(self.accuracy[i])),
                ])


@dataclass
class EvalReport:
    accuracy: float
    precision_weighted: float
    recall_weighted: float
    f1_weighted: float
    per_class: list[ClassMetrics]
    confusion: list[list[int]]
    confidence_predicted_class: float
    confidence_true_class: float
    ece: float
    train_time_s: float
    test_time_per_sample_ms: float
    model_size_mb: float
    label_names: list[str] = field(default_factory=list)
    seed: int = 0
    config_digest: str = ""

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["format"] = REPORT_FORMAT
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        doc = dict(doc)
        doc.pop("format", None)
        doc["per_class"] = [ClassMetrics(**c) for c in doc["per_class"]]
        return cls(**doc)


def confusion_matrix(labels, predictions, class_count: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if labels.shape != predictions.shape:
        raise ValueError(f"{labels.size} labels vs {predictions.size} predictions")
    cm = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(cm, (labels, predictions), 1)
    return cm


def classification_metrics(labels, predictions, class_count: int) -> ClassificationMetrics:
    """Accuracy and support-weighted precision/recall/F1.

    Undefined ratios (no predictions or no support for a class) are reported
    as 0 with a flag instead of raising.
    """
    cm = confusion_matrix(labels, predictions, class_count)
    n = cm.sum()
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    per_class = []
    for c in range(class_count):
        p_undef = predicted[c] == 0
        r_undef = support[c] == 0
        p = 0.0 if p_undef else tp[c] / predicted[c]
        r = 0.0 if r_undef else tp[c] / support[c]
        f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
        per_class.append(ClassMetrics(float(p), float(r), float(f), int(support[c]), bool(p_undef), bool(r_undef)))
    weights = support / n if n else np.zeros(class_count)
    return ClassificationMetrics(
        accuracy=float(tp.sum() / n) if n else 0.0,
        precision_weighted=float(sum(w * m.precision for w, m in zip(weights, per_class))),
        recall_weighted=float(sum(w * m.recall for w, m in zip(weights, per_class))),
        f1_weighted=float(sum(w * m.f1 for w, m in zip(weights, per_class))),
        per_class=per_class,
        confusion=cm,
    )


def _check_probabilities(probabilities) -> np.ndarray:
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 2 or not np.allclose(p.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("probability rows must sum to 1")
    return p


def confidence_metrics(probabilities, predictions, labels) -> tuple[float, float]:
    """Mean probability of the predicted class and of the true class."""
    p = _check_probabilities(probabilities)
    rows = np.arange(p.shape[0])
    return float(p[rows, np.asarray(predictions)].mean()), float(p[rows, np.asarray(labels)].mean())


def calibration_bins(probabilities, predictions, labels, bins: int = ECE_BINS) -> CalibrationBins:
    """Equal-width bins over predicted-class confidence, right-inclusive (0 goes to the first bin)."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    p = _check_probabilities(probabilities)
    predictions = np.asarray(predictions)
    conf = p[np.arange(p.shape[0]), predictions]
    correct = (predictions == np.asarray(labels)).astype(np.float64)
    idx = np.clip(np.ceil(conf * bins).astype(np.int64) - 1, 0, bins - 1)
    count = np.bincount(idx, minlength=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_conf = np.where(count > 0, np.bincount(idx, weights=conf, minlength=bins) / count, 0.0)
        acc = np.where(count > 0, np.bincount(idx, weights=correct, minlength=bins) / count, 0.0)
    return CalibrationBins(np.linspace(0.0, 1.0, bins + 1), count, mean_conf, acc)


def expected_calibration_error(probabilities, predictions, labels, bins: int = ECE_BINS) -> float:
    cb = calibration_bins(probabilities, predictions, labels, bins)
    n = cb.count.sum()
    return float(np.sum(cb.count / n * np.abs(cb.accuracy - cb.mean_confidence))) if n else 0.0


def time_inference(predict: Callable[[np.ndarray], object], rows: np.ndarray, passes: int = 3) -> float:
    """Median seconds per row over ``passes`` full passes, after one untimed warm-up."""
    n = max(rows.shape[0], 1)
    predict(rows)
    samples = []
    for _ in range(passes):
        t0 = time.perf_counter()
        predict(rows)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples) / n


def measure_times(train_fn: Callable[[], object], model=None, test_rows=None, passes: int = 3) -> tuple[float, float, object]:
    """Wall-clock training time (s) and per-row inference time (ms).

    ``train_fn`` is timed once end to end and its result is used as the model
    unless one is given.
    """
    t0 = time.perf_counter()
    fitted = train_fn()
    train_time = time.perf_counter() - t0
    model = fitted if model is None else model
    per_row = time_inference(model.predict_proba, np.asarray(test_rows), passes) if test_rows is not None else 0.0
    return train_time, per_row * 1e3, model


def build_report(
    labels,
    probabilities,
    label_names,
    train_time_s: float = 0.0,
    test_time_per_sample_ms: float = 0.0,
    model_size_bytes: int = 0,
    seed: int = 0,
    config_digest: str = "",
) -> EvalReport:
    p = _check_probabilities(probabilities)
    preds = np.argmax(p, axis=1)
    cm = classification_metrics(labels, preds, len(label_names))
    conf_pred, conf_true = confidence_metrics(p, preds, labels)
    return EvalReport(
        accuracy=cm.accuracy,
        precision_weighted=cm.precision_weighted,
        recall_weighted=cm.recall_weighted,
        f1_weighted=cm.f1_weighted,
        per_class=cm.per_class,
        confusion=cm.confusion.tolist(),
        confidence_predicted_class=conf_pred,
        confidence_true_class=conf_true,
        ece=expected_calibration_error(p, preds, labels),
        train_time_s=float(train_time_s),
        test_time_per_sample_ms=float(test_time_per_sample_ms),
        model_size_mb=model_size_bytes / 1e6,
        label_names=list(label_names),
        seed=seed,
        config_digest=config_digest,
    )


MARKDOWN_COLUMNS = (
    ("Accuracy (%)", "accuracy", 100.0, 3),
    ("Precision (%)", "precision_weighted", 100.0, 3),
    ("Recall (%)", "recall_weighted", 100.0, 3),
    ("F1 (%)", "f1_weighted", 100.0, 3),
    ("Training Time (s)", "train_time_s", 1.0, 2),
    ("Avg Test Time Per Sample (ms)", "test_time_per_sample_ms", 1.0, 4),
    ("Model Size (MB)", "model_size_mb", 1.0, 2),
    ("Avg Confidence (%)", "confidence_true_class", 100.0, 2),
    ("ECE (%)", "ece", 100.0, 2),
)


def report_markdown(report: EvalReport, method: str = "Full pipeline") -> str:
    head = "| Method | " + " | ".join(c[0] for c in MARKDOWN_COLUMNS) + " |"
    rule = "|" + "---|" * (len(MARKDOWN_COLUMNS) + 1)
    cells = [f"{getattr(report, attr) * scale:.{digits}f}" for _, attr, scale, digits in MARKDOWN_COLUMNS]
    return "\n".join([head, rule, f"| {method} | " + " | ".join(cells) + " |", ""])


def emit_report(report: EvalReport, path, method: str = "Full pipeline") -> tuple[Path, Path]:
    """Write ``<path>.json`` and ``<path>.md``; ``path`` may be a directory or a stem."""
    path = Path(path)
    if path.suffix == "" and (path.is_dir() or not path.exists()) and path.name != "report":
        path.mkdir(parents=True, exist_ok=True)
        stem = path / "report"
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        stem = path.with_suffix("")
    json_path = stem.with_suffix(".json")
    md_path = stem.with_suffix(".md")
    json_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    md_path.write_text(report_markdown(report, method), encoding="utf-8")
    return json_path, md_path


def load_report(path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def strip_timing(doc: dict) -> dict:
    return {k: v for k, v in doc.items() if k not in TIMING_FIELDS}
