"""Training, evaluation, cross-validation, and the gamma/beta sensitivity sweep.

Everything is deterministic given (config, seed): model init, shuffling, and
fold splits all draw from seed sequences derived from the master seed, so two
runs with identical inputs produce identical metrics files. Folds and repeats
are independent and can run in parallel worker processes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import StratifiedKFold

from .autodiff import Adam, Tape, backward
from .errors import EmptySet, NonFiniteLoss, TooFewSamples
from .graphs import AttributedGraph, GraphArrays, GraphDataset
from .network import Batch, ModelConfig, Network

LOSS_DIVERGENCE_BOUND = 1e6


@dataclass(frozen=True)
class Metrics:
    """Binary-classification metrics with their confusion counts.

    Metrics whose denominator is zero are reported as 0.0 and named in
    `degenerate`.
    """

    acc: float
    sen: float
    spe: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    degenerate: frozenset[str]

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> "Metrics":
        degenerate = set()

        def ratio(num, den, name):
            if den == 0:
                degenerate.add(name)
                return 0.0
            return num / den

        total = tp + fp + tn + fn
        acc = ratio(tp + tn, total, "ACC")
        sen = ratio(tp, tp + fn, "SEN")
        spe = ratio(tn, tn + fp, "SPE")
        precision = tp / (tp + fp) if (tp + fp) else 0.0
        f1 = ratio(2.0 * precision * sen, precision + sen, "F1")
        return cls(acc=acc, sen=sen, spe=spe, f1=f1, tp=tp, fp=fp, tn=tn, fn=fn,
                   degenerate=frozenset(degenerate))


def confusion_counts(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[int, int, int, int]:
    y_true = np.asarray(y_true).astype(int)
    y_pred = np.asarray(y_pred).astype(int)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    return tp, fp, tn, fn


def predict_logits(net: Network, graphs: list[AttributedGraph],
                   structs: list[GraphArrays] | None = None) -> np.ndarray:
    """Eval-mode logits (batch-norm uses running statistics)."""
    if structs is None:
        structs = [GraphArrays(g) for g in graphs]
    batch = Batch(graphs, structs)
    logits, _ = net.forward_batch(batch, training=False)
    return logits.data.copy()


def evaluate(net: Network, graphs: list[AttributedGraph]) -> Metrics:
    """Confusion metrics at the fixed logit-0 decision threshold."""
    if not graphs:
        raise EmptySet("evaluation needs a non-empty labeled set")
    if any(g.label is None for g in graphs):
        raise EmptySet("evaluation needs labels on every graph")
    logits = predict_logits(net, graphs)
    preds = (logits > 0).astype(int)
    labels = np.array([g.label for g in graphs], dtype=int)
    return Metrics.from_counts(*confusion_counts(labels, preds))


def train_network(net: Network, graphs: list[AttributedGraph], cfg: ModelConfig,
                  rng: np.random.Generator) -> list[float]:
    """Adam over shuffled minibatches; returns the per-epoch mean loss history."""
    structs = [GraphArrays(g) for g in graphs]
    params = net.parameters()
    opt = Adam(params, lr=cfg.lr)
    n = len(graphs)
    history: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = Batch([graphs[i] for i in idx], [structs[i] for i in idx])
            with Tape() as tape:
                loss, _, _ = net.loss_batch(batch, training=True)
            value = loss.item()
            if not np.isfinite(value) or value > LOSS_DIVERGENCE_BOUND:
                raise NonFiniteLoss(
                    f"loss {value} at epoch {epoch}, batch starting {start}")
            opt.zero_grad()
            backward(tape, loss)
            opt.step()
            total += value * len(idx)
        history.append(total / n)
    return history


@dataclass
class FoldResult:
    repeat: int
    fold: int
    metrics: Metrics
    history: list[float]


@dataclass
class CvSummary:
    """All per-(repeat, fold) results plus mean/std aggregates.

    Standard deviations use the population formula (ddof=0).
    """

    results: list[FoldResult]

    def _values(self, name: str) -> np.ndarray:
        return np.array([getattr(r.metrics, name) for r in self.results])

    def mean(self, name: str) -> float:
        return float(self._values(name).mean())

    def std(self, name: str) -> float:
        return float(self._values(name).std(ddof=0))


def _fold_seed(seed: int, repeat: int) -> int:
    return int(np.random.SeedSequence([seed, repeat]).generate_state(1)[0])


def _run_fold(graphs: list[AttributedGraph], train_idx, test_idx, cfg: ModelConfig,
              repeat: int, fold: int) -> FoldResult:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, repeat, fold]))
    d = graphs[0].node_dim
    de = graphs[0].edge_dim
    net = Network(d, de, cfg, rng)
    history = train_network(net, [graphs[i] for i in train_idx], cfg, rng)
    metrics = evaluate(net, [graphs[i] for i in test_idx])
    return FoldResult(repeat=repeat, fold=fold, metrics=metrics, history=history)


def cross_validate(dataset: GraphDataset, cfg: ModelConfig) -> CvSummary:
    """Repeated stratified k-fold CV with a fresh seeded model per fold."""
    graphs = dataset.graphs
    if len(graphs) < cfg.folds:
        raise TooFewSamples(f"{len(graphs)} graphs for {cfg.folds} folds")
    if not dataset.labeled:
        raise EmptySet("cross-validation needs a labeled dataset")
    labels = dataset.labels()
    tasks = []
    for repeat in range(cfg.repeats):
        skf = StratifiedKFold(n_splits=cfg.folds, shuffle=True,
                              random_state=_fold_seed(cfg.seed, repeat))
        for fold, (train_idx, test_idx) in enumerate(skf.split(np.zeros(len(graphs)),
                                                               labels)):
            tasks.append((repeat, fold, train_idx, test_idx))
    if cfg.jobs != 1:
        results = Parallel(n_jobs=cfg.jobs)(
            delayed(_run_fold)(graphs, tr, te, cfg, rep, fold)
            for rep, fold, tr, te in tasks)
    else:
        results = [_run_fold(graphs, tr, te, cfg, rep, fold)
                   for rep, fold, tr, te in tasks]
    results.sort(key=lambda r: (r.repeat, r.fold))
    return CvSummary(results=list(results))


@dataclass
class SweepCell:
    gamma: int
    beta_cap: int
    mean_acc: float
    std_acc: float


def sensitivity_sweep(dataset: GraphDataset, gammas: list[int], beta_caps: list[int],
                      cfg: ModelConfig) -> list[SweepCell]:
    """One cross-validation per (gamma, beta_cap) cell, ordered gamma then cap."""
    cells = []
    for gamma in sorted(gammas):
        for cap in sorted(beta_caps):
            summary = cross_validate(dataset, replace(cfg, gamma=gamma, beta_cap=cap))
            cells.append(SweepCell(gamma=gamma, beta_cap=cap,
                                   mean_acc=summary.mean("acc"),
                                   std_acc=summary.std("acc")))
    return cells


# -- results files ----------------------------------------------------------


def write_metrics_csv(summary: CvSummary, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["repeat", "fold", "ACC", "SEN", "SPE", "F1"])
        for r in summary.results:
            writer.writerow([r.repeat, r.fold, repr(r.metrics.acc), repr(r.metrics.sen),
                             repr(r.metrics.spe), repr(r.metrics.f1)])


def write_loss_history_csv(summary: CvSummary, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["repeat", "fold", "epoch", "loss"])
        for r in summary.results:
            for epoch, loss in enumerate(r.history):
                writer.writerow([r.repeat, r.fold, epoch, repr(loss)])


def write_sweep_csv(cells: list[SweepCell], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gamma", "beta_cap", "mean_acc", "std_acc"])
        for c in cells:
            writer.writerow([c.gamma, c.beta_cap, repr(c.mean_acc), repr(c.std_acc)])
