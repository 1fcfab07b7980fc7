"""The coordinator: holds the n x m local prediction matrix, applies pushes,
and answers pulls under the bounded-staleness admission rule.

Concurrency contract: every handler runs under one lock, so an admission
check and the sums it returns observe a consistent snapshot. Staleness comes
from *when* workers call, not from torn reads. Used single-threaded it is
fully deterministic.
"""

from __future__ import annotations

import threading

import numpy as np

from fdml.transport import (
    ERR_BAD_REQUEST,
    ERR_BAD_SAMPLE,
    ERR_BAD_WORKER,
    ErrorReply,
    PullGrant,
    PullReject,
    PullRequest,
    PushAck,
    PushRequest,
)


class QueryError(RuntimeError):
    pass


class Coordinator:
    def __init__(self, n_samples: int, n_parties: int, staleness_bound: int):
        if staleness_bound < 0:
            raise ValueError("staleness bound must be >= 0")
        self.n_samples = n_samples
        self.n_parties = n_parties
        self.tau = staleness_bound
        # A_{i,j}: latest pushed local prediction, zero-initialized so the
        # first aggregate is the sum of whichever parties have pushed
        self.matrix = np.zeros((n_samples, n_parties))
        self.last_writer = np.zeros((n_samples, n_parties), dtype=np.int64)
        self.progress = {j: 0 for j in range(n_parties)}
        self.rejections = {j: 0 for j in range(n_parties)}
        self._lock = threading.Lock()

    # -- protocol handlers -------------------------------------------------

    def handle_push(self, worker: int, iteration: int, updates):
        """Overwrite the named cells and advance the worker's clock."""
        with self._lock:
            if not 0 <= worker < self.n_parties:
                return ErrorReply(ERR_BAD_WORKER, f"unknown worker {worker}")
            ids = [i for i, _ in updates]
            if any(not 0 <= i < self.n_samples for i in ids):
                return ErrorReply(ERR_BAD_SAMPLE, "sample id out of range")
            for i, c in updates:
                self.matrix[i, worker] = c
                self.last_writer[i, worker] = iteration
            if iteration > self.progress[worker]:
                self.progress[worker] = iteration
            return PushAck(iteration)

    def handle_pull(self, worker: int, iteration: int, sample_ids):
        """Grant per-sample sums iff the caller is within tau of the slowest."""
        with self._lock:
            if not 0 <= worker < self.n_parties:
                return ErrorReply(ERR_BAD_WORKER, f"unknown worker {worker}")
            if any(not 0 <= i < self.n_samples for i in sample_ids):
                return ErrorReply(ERR_BAD_SAMPLE, "sample id out of range")
            t_min = min(self.progress.values())
            if iteration - t_min > self.tau:
                self.rejections[worker] += 1
                return PullReject(iteration, t_min)
            ids = np.asarray(sample_ids, dtype=np.int64)
            sums = np.zeros(ids.size)
            for k in range(self.n_parties):  # fixed party-order accumulation
                sums += self.matrix[ids, k]
            return PullGrant(iteration, tuple(sums.tolist()))

    def handle_message(self, msg):
        if isinstance(msg, PushRequest):
            return self.handle_push(msg.worker, msg.iteration, list(zip(msg.sample_ids, msg.values)))
        if isinstance(msg, PullRequest):
            return self.handle_pull(msg.worker, msg.iteration, msg.sample_ids)
        return ErrorReply(ERR_BAD_REQUEST, f"unexpected message {type(msg).__name__}")

    # -- operator surface ---------------------------------------------------

    def slowest_iteration(self) -> int:
        with self._lock:
            if not self.progress:
                raise QueryError("no workers registered")
            return min(self.progress.values())

    def status_text(self) -> str:
        with self._lock:
            lines = [f"t_min={min(self.progress.values())}"]
            for j in sorted(self.progress):
                lines.append(f"worker.{j}.iteration={self.progress[j]}")
            for j in sorted(self.rejections):
                lines.append(f"worker.{j}.rejections={self.rejections[j]}")
            lines.append(f"tau={self.tau}")
            return "\n".join(lines) + "\n"

    def row(self, sample_id: int) -> np.ndarray:
        with self._lock:
            return self.matrix[sample_id].copy()
