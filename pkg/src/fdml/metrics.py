"""Evaluation metrics and the delimited report path.

AUC is the rank statistic (Mann-Whitney) with ties counted half, computed in
O(N log N); trapezoidal ROC integration handles ties differently and is
deliberately not used.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from fdml.model import log_loss, sigmoid

CSV_HEADER = ("scheme", "epoch", "train_objective", "test_logloss", "test_auc", "elapsed_s")


class EvaluationError(ValueError):
    pass


@dataclass
class TraceRow:
    scheme: str
    epoch: int
    train_objective: float
    test_logloss: float
    test_auc: float
    elapsed_s: float


def auc(scores, labels) -> float:
    """Probability a random positive outranks a random negative; ties count 1/2."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n_pos = int(np.sum(y == 1))
    n_neg = s.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUC needs at least one positive and one negative label")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_s = s[order]
    # average ranks over tie groups
    boundaries = np.flatnonzero(np.diff(sorted_s) != 0) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [s.size]))
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = 0.5 * (a + 1 + b)
    pos_rank_sum = float(np.sum(ranks[y == 1]))
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def composite_scores(blocks, kinds, stores) -> np.ndarray:
    """Pre-sigmoid scores of the composite model over row-aligned stores."""
    s = np.zeros(stores[0].shape[0])
    for block, kind, store in zip(blocks, kinds, stores):
        s += kind.batch_prediction(block, store)
    return s


def dataset_logloss(blocks, kinds, stores, labels) -> float:
    """Mean binary log loss over a dataset, no regularization term."""
    p = sigmoid(composite_scores(blocks, kinds, stores))
    return float(np.mean(log_loss(p, labels)))


def evaluate_composite(blocks, kinds, stores, labels):
    s = composite_scores(blocks, kinds, stores)
    ll = float(np.mean(log_loss(sigmoid(s), labels)))
    return ll, auc(s, labels)


def write_metrics_csv(path, rows):
    with open(path, "w", newline="") as f:
        _write_csv(f, rows)


def metrics_csv_text(rows) -> str:
    buf = io.StringIO()
    _write_csv(buf, rows)
    return buf.getvalue()


def _write_csv(f, rows):
    writer = csv.writer(f)
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([r.scheme, r.epoch, repr(r.train_objective), repr(r.test_logloss),
                         repr(r.test_auc), repr(r.elapsed_s)])


def read_metrics_csv(path_or_text) -> list[TraceRow]:
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        f = io.StringIO(path_or_text)
        return _read_csv(f)
    with open(path_or_text, newline="") as f:
        return _read_csv(f)


def _read_csv(f):
    reader = csv.reader(f)
    header = next(reader)
    if tuple(header) != CSV_HEADER:
        raise EvaluationError(f"unexpected CSV header {header}")
    return [TraceRow(r[0], int(r[1]), float(r[2]), float(r[3]), float(r[4]), float(r[5]))
            for r in reader if r]


def summary_table(rows) -> str:
    """Aligned per-scheme summary from each scheme's last epoch."""
    final = {}
    for r in rows:
        cur = final.get(r.scheme)
        if cur is None or r.epoch >= cur.epoch:
            final[r.scheme] = r
    header = ("scheme", "train_obj", "test_logloss", "test_auc", "time_s")
    lines = [[s, f"{r.train_objective:.4f}", f"{r.test_logloss:.4f}",
              f"{r.test_auc:.4f}", f"{r.elapsed_s:.1f}"] for s, r in final.items()]
    widths = [max(len(header[c]), *(len(row[c]) for row in lines)) if lines else len(header[c])
              for c in range(5)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    out = [fmt.format(*header)]
    out.extend(fmt.format(*row) for row in lines)
    return "\n".join(out) + "\n"
