"""Epoch loop, k-fold cross-validation and prediction reports.

JSON-lines report schema (``schema`` = ``"procaudit.report/1"``)
-----------------------------------------------------------------
One object per fold, in fold order::

    {"schema": ..., "kind": "fold", "fold": 1, "loss": 0.31, "accuracy": 0.86,
     "train_size": 9000, "test_size": 1000, "epoch_losses": [...]}

followed by one summary object::

    {"schema": ..., "kind": "crossval_summary", "task": "binary", "k": 10,
     "seed": 0, "average_loss": ..., "average_accuracy": ..., "config": {...}}

Fold loss is the mean cross-entropy on the held-out fold.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import normalize
from .core import batch_cross_entropy
from .data import FEATURE_ORDER, Dataset, LabelMode, derive_labels, format_real
from .mlp import (
    Model,
    NetworkConfig,
    NetworkParameters,
    backward,
    forward,
    init_params,
    make_optimizer,
)
from .normalize import NormalizationStats

REPORT_SCHEMA = "procaudit.report/1"
MAX_COVERAGE_RETRIES = 5


class StratificationError(RuntimeError):
    """Some class is missing from a training split even after re-seeding."""


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 512
    dropout: float = 0.2
    batch: int = 128
    lr: float = 0.001
    optimizer: str = "rmsprop"
    epochs: int = 20
    activation: str = "relu"

    def network(self, output_classes: int, seed: int) -> NetworkConfig:
        return NetworkConfig(
            input_dim=len(FEATURE_ORDER), hidden_dim=self.hidden,
            dropout_ratio=self.dropout, output_classes=output_classes,
            seed=seed, activation=self.activation,
        )


@dataclass(frozen=True)
class FoldReport:
    fold_index: int
    loss: float
    accuracy: float
    train_size: int = 0
    test_size: int = 0
    epoch_losses: tuple[float, ...] = ()


@dataclass
class CrossValReport:
    folds: list[FoldReport]
    task: str
    seed: int
    config: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.folds)

    @property
    def average_loss(self) -> float:
        return math.fsum(f.loss for f in self.folds) / len(self.folds)

    @property
    def average_accuracy(self) -> float:
        return math.fsum(f.accuracy for f in self.folds) / len(self.folds)

    def json_objects(self) -> list[dict]:
        rows = [{
            "schema": REPORT_SCHEMA, "kind": "fold", "fold": f.fold_index,
            "loss": f.loss, "accuracy": f.accuracy, "train_size": f.train_size,
            "test_size": f.test_size, "epoch_losses": list(f.epoch_losses),
        } for f in self.folds]
        rows.append({
            "schema": REPORT_SCHEMA, "kind": "crossval_summary", "task": self.task,
            "k": self.k, "seed": self.seed, "average_loss": self.average_loss,
            "average_accuracy": self.average_accuracy, "config": self.config,
        })
        return rows

    def to_jsonl(self) -> str:
        return "".join(json.dumps(obj, sort_keys=True) + "\n" for obj in self.json_objects())

    def table(self) -> str:
        lines = [f"{'Fold #':<8}  {'Loss':>8}  {'Accuracy':>8}"]
        for f in self.folds:
            lines.append(f"{f.fold_index:<8}  {f.loss:>8.4f}  {f.accuracy:>8.4f}")
        lines.append(f"{'Average':<8}  {self.average_loss:>8.4f}  {self.average_accuracy:>8.4f}")
        return "\n".join(lines)


def read_report(text: str) -> tuple[list[dict], dict]:
    """Split a JSON-lines report into fold objects and the summary."""
    objs = [json.loads(line) for line in text.splitlines() if line.strip()]
    folds = [o for o in objs if o.get("kind") == "fold"]
    summary = next(o for o in objs if o.get("kind") == "crossval_summary")
    return folds, summary


# --- folds -----------------------------------------------------------------

def partition_folds(n: int, k: int, seed: int, strata: Optional[np.ndarray] = None
                    ) -> list[np.ndarray]:
    """Split ``range(n)`` into ``k`` disjoint folds whose sizes differ by at most one.

    Plain mode shuffles with ``seed`` and cuts the permutation into contiguous
    pieces (larger pieces first). With ``strata`` the shuffled indices are
    grouped by stratum and dealt round-robin, so each class spreads evenly.
    """
    if k < 2:
        raise ValueError("need at least 2 folds")
    if k > n:
        raise ValueError(f"cannot make {k} folds from {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    if strata is None:
        pieces = np.array_split(perm, k)
    else:
        strata = np.asarray(strata)
        if strata.shape[0] != n:
            raise ValueError("strata length must equal n")
        grouped = perm[np.argsort(strata[perm], kind="stable")]
        pieces = [grouped[i::k] for i in range(k)]
    return [np.sort(p) for p in pieces]


# --- training --------------------------------------------------------------

def train_epochs(params: NetworkParameters, features: np.ndarray, labels: np.ndarray,
                 epochs: int, batch: int, lr: float, rng: np.random.Generator,
                 optimizer: str = "rmsprop") -> tuple[NetworkParameters, list[float]]:
    """Mini-batch training; returns the final parameters and the mean loss of each epoch.

    Each epoch shuffles the rows with ``rng`` and walks them in batches of at
    most ``batch``. The recorded loss is the train-mode (dropout on) loss of
    each batch before its update, averaged over rows.
    """
    if epochs < 1:
        raise ValueError("epochs must be at least 1")
    if batch < 1:
        raise ValueError("batch size must be at least 1")
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    if y.shape[0] != n:
        raise ValueError("labels and features are misaligned")
    opt = make_optimizer(optimizer)
    trace = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            rows = order[start:start + batch]
            probs, cache = forward(params, x[rows], "train", rng)
            total += float(batch_cross_entropy(probs, y[rows]).sum())
            params = opt.step(params, backward(params, cache, y[rows]), lr)
        trace.append(total / n)
    return params, trace


def evaluate(params: NetworkParameters, features: np.ndarray, labels: np.ndarray
             ) -> tuple[float, float]:
    """Mean cross-entropy and argmax accuracy (ties go to the lowest class)."""
    y = np.asarray(labels, dtype=np.int64)
    if y.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty set")
    probs = np.atleast_2d(forward(params, features, "infer"))
    return score_probabilities(probs, y)


def score_probabilities(probs: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    y = np.asarray(labels, dtype=np.int64)
    loss = float(batch_cross_entropy(probs, y).mean())
    accuracy = float(np.mean(np.argmax(probs, axis=1) == y))
    return loss, accuracy


# --- cross-validation ------------------------------------------------------

@dataclass
class _FoldJob:
    fold_index: int
    train_rows: np.ndarray
    test_rows: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    stats: Optional[NormalizationStats]
    train_config: TrainConfig
    classes: int
    seed: int


def fold_seeds(seed: int, fold_index: int) -> tuple[int, np.random.Generator]:
    """Independent (init seed, training rng) pair for one fold."""
    init_ss, train_ss = np.random.SeedSequence([seed, fold_index]).spawn(2)
    return int(init_ss.generate_state(1)[0]), np.random.default_rng(train_ss)


def _run_fold(job: _FoldJob) -> FoldReport:
    tc = job.train_config
    x_train = job.features[job.train_rows]
    stats = job.stats if job.stats is not None else normalize.fit(x_train)
    init_seed, rng = fold_seeds(job.seed, job.fold_index)
    params = init_params(tc.network(job.classes, init_seed))
    params, trace = train_epochs(
        params, normalize.transform(x_train, stats), job.labels[job.train_rows],
        tc.epochs, tc.batch, tc.lr, rng, tc.optimizer,
    )
    loss, acc = evaluate(params, normalize.transform(job.features[job.test_rows], stats),
                         job.labels[job.test_rows])
    return FoldReport(job.fold_index, loss, acc, int(job.train_rows.size),
                      int(job.test_rows.size), tuple(trace))


def _covering_folds(labels: np.ndarray, k: int, seed: int, stratified: bool) -> list[np.ndarray]:
    classes = np.unique(labels)
    n = labels.shape[0]
    for attempt in range(MAX_COVERAGE_RETRIES + 1):
        part_seed = seed if attempt == 0 else int(
            np.random.SeedSequence([seed, 0xF01D, attempt]).generate_state(1)[0])
        folds = partition_folds(n, k, part_seed, labels if stratified else None)
        ok = True
        for test in folds:
            mask = np.ones(n, dtype=bool)
            mask[test] = False
            if np.unique(labels[mask]).size != classes.size:
                ok = False
                break
        if ok:
            return folds
    raise StratificationError(
        f"a class is missing from some training split after {MAX_COVERAGE_RETRIES} re-seeds; "
        "try --stratified or fewer folds"
    )


def cross_validate(ds: Dataset, mode, train_config: TrainConfig = TrainConfig(), k: int = 10,
                   seed: int = 0, *, paper_faithful: bool = False, stratified: bool = False,
                   include_clean: bool = False, classes: Optional[int] = None, jobs: int = 1,
                   observer: Optional[Callable[[int, np.ndarray, np.ndarray], None]] = None,
                   ) -> CrossValReport:
    """k-fold cross-validation of a freshly initialised network per fold.

    Normalisation is fitted on each fold's training rows; ``paper_faithful``
    fits it once on every row instead. ``observer(fold, train_rows, test_rows)``
    is called for each fold before training. Serial and parallel runs give
    identical reports because every fold's randomness derives from
    ``(seed, fold)``.
    """
    mode = LabelMode(mode)
    labels, rows = derive_labels(ds, mode, include_clean=include_clean)
    features = ds.features()[rows]
    n_classes = classes if classes is not None else max(2, int(labels.max()) + 1)
    if labels.max() >= n_classes:
        raise ValueError(f"label {int(labels.max())} does not fit {n_classes} classes")
    folds = _covering_folds(labels, k, seed, stratified)
    shared_stats = normalize.fit(features) if paper_faithful else None

    jobs_list = []
    everything = np.arange(labels.shape[0])
    for i, test in enumerate(folds, start=1):
        train = np.setdiff1d(everything, test, assume_unique=True)
        if np.intersect1d(train, test).size:
            raise AssertionError("training rows overlap the test fold")
        if observer is not None:
            observer(i, train, test)
        jobs_list.append(_FoldJob(i, train, test, features, labels, shared_stats,
                                  train_config, n_classes, seed))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, k)) as pool:
            reports = list(pool.map(_run_fold, jobs_list))
    else:
        reports = [_run_fold(job) for job in jobs_list]

    snapshot = asdict(train_config)
    snapshot.update(k=k, classes=n_classes, paper_faithful=paper_faithful,
                    stratified=stratified, include_clean=include_clean, rows=int(labels.shape[0]))
    return CrossValReport(sorted(reports, key=lambda r: r.fold_index), mode.value, seed, snapshot)


def train_model(ds: Dataset, mode, train_config: TrainConfig = TrainConfig(), seed: int = 0,
                include_clean: bool = False, classes: Optional[int] = None) -> tuple[Model, list[float]]:
    """Fit normalisation and a network on every row of ``ds``."""
    mode = LabelMode(mode)
    labels, rows = derive_labels(ds, mode, include_clean=include_clean)
    features = ds.features()[rows]
    n_classes = classes if classes is not None else max(2, int(labels.max()) + 1)
    stats = normalize.fit(features)
    init_seed, rng = fold_seeds(seed, 0)
    params = init_params(train_config.network(n_classes, init_seed))
    params, trace = train_epochs(params, normalize.transform(features, stats), labels,
                                 train_config.epochs, train_config.batch, train_config.lr,
                                 rng, train_config.optimizer)
    task = mode.value if not (mode is LabelMode.MULTICLASS and include_clean) else "multiclass+clean"
    return Model(params, stats, task), trace


# --- prediction tables -----------------------------------------------------

@dataclass(frozen=True)
class PredictionRow:
    inputs: tuple[float, ...]
    predicted: int
    probability: float
    truth: Optional[int] = None

    @property
    def hit(self) -> Optional[bool]:
        return None if self.truth is None else self.truth == self.predicted


@dataclass
class PredictionTable:
    rows: list[PredictionRow]
    has_truth: bool

    @property
    def hits(self) -> int:
        return sum(1 for r in self.rows if r.hit)

    @property
    def hit_rate(self) -> Optional[float]:
        if not self.has_truth or not self.rows:
            return None
        return self.hits / len(self.rows)

    def header(self) -> list[str]:
        cols = [c.upper() for c in FEATURE_ORDER]
        if self.has_truth:
            cols.append("TRUE")
        cols += ["PRED", "PROB"]
        if self.has_truth:
            cols.append("HIT")
        return cols

    def records(self) -> list[list[str]]:
        out = []
        for r in self.rows:
            cells = [format_real(v) if c in ("np", "pa", "ptp") else str(int(v))
                     for c, v in zip(FEATURE_ORDER, r.inputs)]
            if self.has_truth:
                cells.append(str(r.truth))
            cells += [str(r.predicted), f"{r.probability:.4f}"]
            if self.has_truth:
                cells.append("hit" if r.hit else "miss")
            out.append(cells)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header())
        writer.writerows(self.records())
        return buf.getvalue()

    def render(self) -> str:
        grid = [self.header()] + self.records()
        widths = [max(len(row[j]) for row in grid) for j in range(len(grid[0]))]
        lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in grid]
        if self.has_truth and self.rows:
            lines.append(f"hits {self.hits}/{len(self.rows)}  hit rate {self.hit_rate:.4f}")
        return "\n".join(lines)


def prediction_table(params: NetworkParameters, stats: NormalizationStats, records: Dataset,
                     truth: Optional[Sequence[int]] = None, label_offset: int = 0) -> PredictionTable:
    """Per-record prediction, its probability and (with ``truth``) hit or miss.

    ``label_offset`` shifts predicted class ids into the caller's label space,
    e.g. 1 to report multiclass predictions as FT values.
    """
    has_truth = truth is not None
    if len(records) == 0:
        return PredictionTable([], has_truth)
    x_raw = records.features()
    probs = np.atleast_2d(forward(params, normalize.transform(x_raw, stats), "infer"))
    pred = np.argmax(probs, axis=1)
    if has_truth:
        truth = np.asarray(truth, dtype=np.int64)
        if truth.shape[0] != len(records):
            raise ValueError("truth labels and records are misaligned")
    rows = [
        PredictionRow(
            tuple(float(v) for v in x_raw[i]), int(pred[i]) + label_offset,
            float(probs[i, pred[i]]), int(truth[i]) if has_truth else None,
        )
        for i in range(len(records))
    ]
    return PredictionTable(rows, has_truth)


def sample_rows(n_total: int, size: int, seed: int) -> np.ndarray:
    """Sorted random row indices, at most ``size`` of them."""
    size = min(size, n_total)
    return np.sort(np.random.default_rng(seed).choice(n_total, size=size, replace=False))
