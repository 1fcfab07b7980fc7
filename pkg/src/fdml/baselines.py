"""Single-process baseline trainers: the local and centralized schemes.

Both walk the same shared schedule as the distributed engine but update all
blocks synchronously in one loop, with no coordinator, matrix or transport
involved. With the feature columns grouped the same way, the linear model's
trajectory is the exact synchronous reference for the distributed run.
"""

from __future__ import annotations

import time

import numpy as np

from fdml import metrics
from fdml.model import h_term, log_loss, sigmoid, submodel_from_name
from fdml.schedule import SampleSchedule, learning_rate
from fdml.worker import TrainingResult


def synchronous_train(train_stores, train_labels, test_stores, test_labels, cfg,
                      scheme: str, record_steps: bool = False):
    """Block-synchronous SGD over per-party feature stores.

    Pass a single store for a plain (local or centralized) model; pass the
    distributed run's stores to obtain its synchronous reference trajectory.
    """
    m = len(train_stores)
    n = train_stores[0].shape[0]
    schedule = SampleSchedule(cfg.seed, n, cfg.batch, cfg.epochs)
    kinds = [submodel_from_name(cfg.model, hidden=cfg.hidden, use_bias=cfg.use_bias)
             for _ in range(m)]
    blocks = [kinds[j].init_params(train_stores[j].shape[1], seed=j) for j in range(m)]

    batch_losses = []
    snapshots = []
    epoch_marks = []
    step_blocks = [] if record_steps else None
    start = time.perf_counter()
    for t in range(1, schedule.total_steps + 1):
        ids = schedule.batch(t)
        rows = [store[ids] for store in train_stores]
        s = np.zeros(ids.size)
        for j in range(m):  # fixed party-order accumulation
            s += kinds[j].batch_prediction(blocks[j], rows[j])
        y = train_labels[ids]
        h = h_term(s, y)
        batch_losses.append(float(np.mean(log_loss(sigmoid(s), y))))
        lr = learning_rate(cfg.base_rate, t)
        for j in range(m):
            g = kinds[j].batch_gradient(blocks[j], rows[j], h, cfg.lam, cfg.reduction)
            blocks[j] = blocks[j] - lr * g
        if record_steps:
            step_blocks.append([b.copy() for b in blocks])
        if t % schedule.steps_per_epoch == 0:
            snapshots.append([b.copy() for b in blocks])
            epoch_marks.append(time.perf_counter() - start)
    elapsed = time.perf_counter() - start

    trace = []
    steps = schedule.steps_per_epoch
    for e, blks in enumerate(snapshots):
        reg = sum(cfg.lam * k.regularizer(b, s.shape[1])
                  for k, b, s in zip(kinds, blks, test_stores))
        train_obj = float(np.mean(batch_losses[e * steps : (e + 1) * steps])) + reg
        test_ll, test_auc = metrics.evaluate_composite(blks, kinds, test_stores, test_labels)
        trace.append(metrics.TraceRow(scheme, e + 1, train_obj, test_ll, test_auc, epoch_marks[e]))

    result = TrainingResult(blocks=blocks, kinds=kinds, trace=trace, elapsed=elapsed)
    if record_steps:
        result.step_blocks = step_blocks
    return result
