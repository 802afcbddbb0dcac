"""Attack-then-filter experiments and their CSV reports.

For every sampled image the classifier gets right, the clean image and one
adversarial image per attack norm are pushed through each filter setting, and
the probabilities of the true and the target label are recorded.
"""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attack import AttackConfig, craft
from .classifier import Classifier, forward, load_model, predict_labels
from .core import Image, LabeledDataset, NumericError, ParameterError, parse_data_source
from .filters import FilterSpec, apply_filter
from .norms import NormKind, distance

log = logging.getLogger(__name__)

BUDGET_TOL = 1e-6


class EmptyCohortError(ParameterError):
    """No sampled image is classified correctly, so there is nothing to attack."""

RECORD_FIELDS = (
    "input_id",
    "attack_norm",
    "beta",
    "filter_kind",
    "kernel_size",
    "true_label",
    "target_label",
    "argmax_label",
    "p_true",
    "p_adv",
)

SUMMARY_FIELDS = (
    "attack_norm",
    "filter_kind",
    "kernel_size",
    "count",
    "mean_p_true",
    "mean_p_adv",
    "attack_success_rate",
    "recovery_rate",
)


@dataclass(frozen=True)
class EvalRecord:
    input_id: str
    attack_norm: str
    beta: float
    filter_kind: str
    kernel_size: int
    p_true: float
    p_adv: float
    argmax_label: int
    true_label: int
    target_label: int

    def __post_init__(self):
        if (self.kernel_size == 0) != (self.filter_kind == "none"):
            raise ParameterError("kernel_size must be 0 exactly when filter_kind is none")

    @property
    def sort_key(self):
        return (self.input_id, self.attack_norm, self.filter_kind, self.kernel_size)


@dataclass(frozen=True)
class SummaryRow:
    attack_norm: str
    filter_kind: str
    kernel_size: int
    count: int
    mean_p_true: float
    mean_p_adv: float
    attack_success_rate: float
    recovery_rate: float


def evaluate_one(
    f: Classifier,
    x: Image,
    y_true: int,
    y_adv: int,
    spec: FilterSpec,
    input_id: str = "",
    attack_norm: str = "none",
    beta: float = 0.0,
) -> EvalRecord:
    """Filter ``x``, classify it and read off the true/target probabilities."""
    for y in (y_true, y_adv):
        if not 0 <= y < f.num_classes:
            raise ParameterError(f"class id {y} outside [0, {f.num_classes})")
    if x.shape != f.input_shape:
        raise ParameterError(f"image shape {x.shape} does not match classifier input {f.input_shape}")
    pred = forward(f, apply_filter(x, spec))
    return EvalRecord(
        input_id=input_id,
        attack_norm=attack_norm,
        beta=float(beta),
        filter_kind="none" if spec.kind == "identity" else spec.kind,
        kernel_size=spec.kernel_size,
        p_true=float(pred.probabilities[y_true]),
        p_adv=float(pred.probabilities[y_adv]),
        argmax_label=pred.argmax_label,
        true_label=int(y_true),
        target_label=int(y_adv),
    )


def _per_norm(value, norms, what: str) -> dict:
    if isinstance(value, dict):
        out = {NormKind.parse(k): float(v) for k, v in value.items()}
        missing = [n.value for n in norms if n not in out]
        if missing:
            raise ParameterError(f"no {what} given for norm(s) {', '.join(missing)}")
        return out
    return {n: float(value) for n in norms}


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run.

    ``model`` and ``data`` accept either in-memory objects or, respectively,
    a model path and a data source string (``synthetic:SEED:COUNT`` or
    ``images.idx,labels.idx``). ``beta`` and ``learning_rate`` may be a single
    number or a mapping from norm name to value.
    """

    model: Classifier | str | Path
    data: LabeledDataset | str
    norms: list = field(default_factory=lambda: ["l1", "l2", "linf"])
    beta: float | dict = 0.1
    learning_rate: float | dict = 0.01
    max_iterations: int = 500
    filters: list = field(
        default_factory=lambda: [
            FilterSpec(),
            FilterSpec("gaussian", 3),
            FilterSpec("median", 3),
            FilterSpec("gaussian", 5),
            FilterSpec("median", 5),
        ]
    )
    samples: int = 50
    seed: int = 0
    target: int | None = None
    out_records: str | Path | None = None
    out_summary: str | Path | None = None

    def __post_init__(self):
        norms = [n for n in self.norms if str(n).lower() != "none"]
        if not norms and not any(str(n).lower() == "none" for n in self.norms):
            raise ParameterError("give at least one attack norm, or 'none' for clean-only runs")
        self.norms = [NormKind.parse(n) for n in norms]
        self.beta = _per_norm(self.beta, self.norms, "beta")
        self.learning_rate = _per_norm(self.learning_rate, self.norms, "learning rate")
        self.filters = [FilterSpec.parse(s) if isinstance(s, str) else s for s in self.filters]
        # the unfiltered column is always reported
        if not any(s.kind == "identity" for s in self.filters):
            self.filters.insert(0, FilterSpec())
        if self.samples < 1:
            raise ParameterError(f"samples must be >= 1, got {self.samples}")
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be >= 1")


def _resolve(cfg: ExperimentConfig) -> tuple[Classifier, LabeledDataset]:
    f = cfg.model if isinstance(cfg.model, Classifier) else load_model(cfg.model)
    data = cfg.data if isinstance(cfg.data, LabeledDataset) else parse_data_source(cfg.data)
    if data.image_shape != f.input_shape:
        raise ParameterError(
            f"dataset images {data.image_shape} do not match classifier input {f.input_shape}"
        )
    return f, data


def select_cohort(f: Classifier, data: LabeledDataset, samples: int, seed: int, target=None):
    """Sample images, keep the correctly classified ones and pair each with a target label.

    Returns a list of ``(dataset index, true label, target label)``.
    """
    rng = np.random.default_rng(seed)
    k = f.num_classes
    if k < 2:
        raise ParameterError("targeted attacks need at least two classes")
    if target is not None and not 0 <= target < k:
        raise ParameterError(f"target {target} outside [0, {k})")
    picked = rng.permutation(len(data))[:samples]
    offsets = rng.integers(1, k, size=len(picked))
    predicted = predict_labels(f, data.subset(picked))
    cohort = []
    for idx, off, pred in zip(picked, offsets, predicted):
        y = int(data.labels[idx])
        if pred != y:
            continue
        t = (y + int(off)) % k if target is None else target
        if t == y:
            continue
        cohort.append((int(idx), y, int(t)))
    return cohort


def run_experiment(cfg: ExperimentConfig) -> list[EvalRecord]:
    f, data = _resolve(cfg)
    cohort = select_cohort(f, data, cfg.samples, cfg.seed, cfg.target)
    if not cohort:
        raise EmptyCohortError("empty cohort: no sampled image is classified correctly")
    log.info("cohort: %d of %d sampled images", len(cohort), min(cfg.samples, len(data)))
    records = []
    for idx, y, t in cohort:
        x, _ = data[idx]
        input_id = f"img{idx:06d}"
        for spec in cfg.filters:
            records.append(evaluate_one(f, x, y, t, spec, input_id))
        for kind in cfg.norms:
            beta = cfg.beta[kind]
            attack = AttackConfig(kind, beta, t, cfg.learning_rate[kind], cfg.max_iterations)
            result = craft(f, x, attack)
            spent = distance(result.adversarial, x, kind)
            if spent > beta + BUDGET_TOL:
                raise NumericError(f"{input_id}: {kind.value} perturbation {spent} exceeds budget {beta}")
            log.debug("%s %s success=%s iters=%d", input_id, kind.value, result.success, result.iterations_used)
            for spec in cfg.filters:
                records.append(
                    evaluate_one(f, result.adversarial, y, t, spec, input_id, kind.value, beta)
                )
    records.sort(key=lambda r: r.sort_key)
    if cfg.out_records is not None:
        write_records(records, cfg.out_records)
    if cfg.out_summary is not None:
        write_summary(summarize(records), cfg.out_summary)
    return records


def summarize(records) -> list[SummaryRow]:
    """Aggregate records per (attack norm, filter, kernel) cell."""
    records = list(records)
    if not records:
        raise ParameterError("cannot summarize an empty record list")
    cells = defaultdict(list)
    for r in records:
        cells[(r.attack_norm, r.filter_kind, r.kernel_size)].append(r)
    rows = []
    for key in sorted(cells):
        group = cells[key]
        rows.append(
            SummaryRow(
                *key,
                count=len(group),
                mean_p_true=float(np.mean([r.p_true for r in group])),
                mean_p_adv=float(np.mean([r.p_adv for r in group])),
                attack_success_rate=float(np.mean([r.argmax_label == r.target_label for r in group])),
                recovery_rate=float(np.mean([r.argmax_label == r.true_label for r in group])),
            )
        )
    return rows


def summary_lookup(rows) -> dict:
    """Index summary rows by ``(attack_norm, filter_label)``, e.g. ``("l1", "median5")``."""
    out = {}
    for r in rows:
        label = "none" if r.filter_kind == "none" else f"{r.filter_kind}{r.kernel_size}"
        out[(r.attack_norm, label)] = r
    return out


# --- CSV ----------------------------------------------------------------------


def _record_row(r: EvalRecord) -> list:
    return [
        r.input_id,
        r.attack_norm,
        f"{r.beta:g}",
        r.filter_kind,
        r.kernel_size,
        r.true_label,
        r.target_label,
        r.argmax_label,
        f"{r.p_true:.6f}",
        f"{r.p_adv:.6f}",
    ]


def write_records(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in sorted(records, key=lambda r: r.sort_key):
            w.writerow(_record_row(r))


def read_records(path) -> list[EvalRecord]:
    with open(path, newline="") as fh:
        return [
            EvalRecord(
                input_id=row["input_id"],
                attack_norm=row["attack_norm"],
                beta=float(row["beta"]),
                filter_kind=row["filter_kind"],
                kernel_size=int(row["kernel_size"]),
                p_true=float(row["p_true"]),
                p_adv=float(row["p_adv"]),
                argmax_label=int(row["argmax_label"]),
                true_label=int(row["true_label"]),
                target_label=int(row["target_label"]),
            )
            for row in csv.DictReader(fh)
        ]


def write_summary(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for r in rows:
            w.writerow(
                [
                    r.attack_norm,
                    r.filter_kind,
                    r.kernel_size,
                    r.count,
                    f"{r.mean_p_true:.6f}",
                    f"{r.mean_p_adv:.6f}",
                    f"{r.attack_success_rate:.6f}",
                    f"{r.recovery_rate:.6f}",
                ]
            )


def write_report(records, summary, path, summary_path=None) -> None:
    """Write the per-record CSV to ``path`` and the summary next to it.

    Without ``summary_path`` the summary goes to ``<stem>_summary.csv``.
    """
    path = Path(path)
    write_records(records, path)
    if summary is not None:
        if summary_path is None:
            summary_path = path.with_name(path.stem + "_summary.csv")
        write_summary(summary, summary_path)
