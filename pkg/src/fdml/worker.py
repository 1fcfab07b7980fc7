"""Worker agents and the training engine.

Each worker owns exactly one parameter block and communicates with the
coordinator only through push/pull messages: per-sample local predictions
out, per-sample prediction sums back. Nothing else ever leaves a worker.

Two execution modes:
  - deterministic: workers are serialized round-robin in one thread (all
    pushes for iteration t, then all pulls and updates), which reproduces
    the block-synchronous reference trajectory bit for bit;
  - threaded: one thread per worker, real asynchrony bounded by tau.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from fdml import metrics
from fdml.coordinator import Coordinator
from fdml.model import FeedForward, h_term, log_loss, sigmoid, submodel_from_name
from fdml.privacy import NoiseSpec, perturb_array
from fdml.schedule import SampleSchedule, learning_rate
from fdml.transport import (
    CoordinatorServer,
    ErrorReply,
    InProcessCarrier,
    PullGrant,
    PullReject,
    PullRequest,
    PushAck,
    PushRequest,
    SocketCarrier,
    TransportError,
)

log = logging.getLogger("fdml.worker")

BACKOFF_INITIAL = 0.001
BACKOFF_CAP = 0.1


class TrainingError(RuntimeError):
    pass


class PeerFailure(TrainingError):
    """A worker stopped because another worker already failed."""


def party_store(kind, csr_slice):
    """Per-party feature store in the layout the sub-model consumes."""
    if isinstance(kind, FeedForward):
        return np.asarray(csr_slice.todense())
    return csr_slice


@dataclass
class EpochRecord:
    epoch: int
    mean_batch_loss: float
    block_snapshots: list = field(default_factory=list)
    elapsed: float = 0.0


class Worker:
    """One party's training agent."""

    def __init__(self, party_id: int, kind, features, labels, schedule: SampleSchedule,
                 carrier, eta: float, lam: float, reduction: str,
                 noise: NoiseSpec = NoiseSpec(), params: np.ndarray | None = None,
                 retry_budget: int | None = None, delay_fn=None, sleep=time.sleep,
                 stop_event: threading.Event | None = None):
        self.party_id = party_id
        self.kind = kind
        self.features = features
        self.labels = labels
        self.schedule = schedule
        self.carrier = carrier
        self.eta = eta
        self.lam = lam
        self.reduction = reduction
        self.noise = noise
        n_feat = features.shape[1]
        self.params = params if params is not None else kind.init_params(n_feat, seed=party_id)
        self.retry_budget = retry_budget
        self.delay_fn = delay_fn
        self.sleep = sleep
        self.stop_event = stop_event
        self._draw_counter = 0
        self.batch_losses: list[float] = []
        self.epoch_snapshots: list[np.ndarray] = []

    def _batch_rows(self, ids):
        return self.features[ids]

    def push(self, t: int):
        ids = self.schedule.batch(t)
        preds = self.kind.batch_prediction(self.params, self._batch_rows(ids))
        sent = perturb_array(preds, self.noise, self._draw_counter)
        self._draw_counter += preds.size
        reply = self.carrier.request(
            PushRequest(self.party_id, t, tuple(int(i) for i in ids), tuple(sent.tolist())))
        if isinstance(reply, ErrorReply):
            raise TrainingError(f"push rejected: {reply.code} {reply.detail}")
        if not isinstance(reply, PushAck):
            raise TrainingError(f"unexpected push reply {type(reply).__name__}")

    def pull(self, t: int) -> np.ndarray:
        """Pull per-sample sums, retrying with back-off while rejected."""
        ids = tuple(int(i) for i in self.schedule.batch(t))
        delay = BACKOFF_INITIAL
        attempts = 0
        while True:
            reply = self.carrier.request(PullRequest(self.party_id, t, ids))
            if isinstance(reply, PullGrant):
                return np.asarray(reply.sums)
            if isinstance(reply, PullReject):
                if self.stop_event is not None and self.stop_event.is_set():
                    raise PeerFailure(
                        f"worker {self.party_id}: stopping at t={t}, a peer failed")
                attempts += 1
                if self.retry_budget is not None and attempts > self.retry_budget:
                    raise TrainingError(
                        f"worker {self.party_id}: pull at t={t} still rejected "
                        f"after {attempts} attempts (t_min={reply.slowest})")
                self.sleep(delay)
                delay = min(delay * 2.0, BACKOFF_CAP)
                continue
            if isinstance(reply, ErrorReply):
                raise TrainingError(f"pull failed: {reply.code} {reply.detail}")
            raise TrainingError(f"unexpected pull reply {type(reply).__name__}")

    def update(self, t: int, sums: np.ndarray):
        ids = self.schedule.batch(t)
        h = h_term(sums, self.labels[ids])
        self.batch_losses.append(float(np.mean(log_loss(sigmoid(sums), self.labels[ids]))))
        g = self.kind.batch_gradient(self.params, self._batch_rows(ids), h, self.lam, self.reduction)
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"worker {self.party_id}: non-finite gradient at t={t}")
        self.params = self.params - learning_rate(self.eta, t) * g

    def step(self, t: int):
        if self.delay_fn is not None:
            pause = self.delay_fn(self.party_id, t)
            if pause:
                self.sleep(pause)
        self.push(t)
        self.update(t, self.pull(t))
        if t % self.schedule.steps_per_epoch == 0:
            self.epoch_snapshots.append(self.params.copy())

    def run(self):
        for t in range(1, self.schedule.total_steps + 1):
            if self.stop_event is not None and self.stop_event.is_set():
                raise PeerFailure(
                    f"worker {self.party_id}: stopping at t={t}, a peer failed")
            self.step(t)


@dataclass
class TrainingResult:
    blocks: list                       # final parameter block per party
    kinds: list
    trace: list                        # metrics.TraceRow per epoch
    elapsed: float
    rejections: dict | None = None


def _evaluate_epochs(workers, kinds, test_stores, test_labels, lam, scheme, t0_losses, elapsed_per_epoch):
    rows = []
    n_epochs = len(workers[0].epoch_snapshots)
    steps = workers[0].schedule.steps_per_epoch
    for e in range(n_epochs):
        blocks = [w.epoch_snapshots[e] for w in workers]
        reg = sum(lam * k.regularizer(b, s.shape[1])
                  for k, b, s in zip(kinds, blocks, test_stores))
        train_obj = float(np.mean(t0_losses[e * steps : (e + 1) * steps])) + reg
        test_ll, test_auc = metrics.evaluate_composite(blocks, kinds, test_stores, test_labels)
        rows.append(metrics.TraceRow(scheme, e + 1, train_obj, test_ll, test_auc,
                                     elapsed_per_epoch[e]))
    return rows


def run_training(train_stores, train_labels, test_stores, test_labels, cfg,
                 scheme: str = "fdml", delay_fn=None, retry_budget: int | None = None,
                 server_host: str = "127.0.0.1"):
    """Train the composite model under the bounded-staleness protocol.

    ``train_stores``/``test_stores`` are per-party feature stores (CSR for
    linear sub-models, dense for feed-forward ones), all row-aligned with the
    replicated labels.
    """
    m = len(train_stores)
    n = train_stores[0].shape[0]
    schedule = SampleSchedule(cfg.seed, n, cfg.batch, cfg.epochs)
    coordinator = Coordinator(n, m, cfg.tau)
    kinds = [submodel_from_name(cfg.model, hidden=cfg.hidden, use_bias=cfg.use_bias)
             for _ in range(m)]
    noise = NoiseSpec(cfg.noise_mechanism, cfg.noise_level, cfg.noise_seed)

    server = None
    carriers = []
    try:
        if cfg.carrier == "socket":
            server = CoordinatorServer(coordinator, host=server_host)
            carriers = [SocketCarrier(server.host, server.port) for _ in range(m)]
        else:
            carriers = [InProcessCarrier(coordinator) for _ in range(m)]

        stop = threading.Event()
        workers = [
            Worker(j, kinds[j], train_stores[j], train_labels, schedule, carriers[j],
                   eta=cfg.base_rate, lam=cfg.lam, reduction=cfg.reduction,
                   noise=NoiseSpec(noise.mechanism, noise.level, noise.seed + j) if noise.active else noise,
                   retry_budget=retry_budget, delay_fn=delay_fn,
                   stop_event=None if cfg.deterministic else stop)
            for j in range(m)
        ]

        start = time.perf_counter()
        epoch_marks = []
        if cfg.deterministic:
            for t in range(1, schedule.total_steps + 1):
                for w in workers:
                    w.push(t)
                for w in workers:
                    w.update(t, w.pull(t))
                    if t % schedule.steps_per_epoch == 0:
                        w.epoch_snapshots.append(w.params.copy())
                if t % schedule.steps_per_epoch == 0:
                    epoch_marks.append(time.perf_counter() - start)
        else:
            errors = []

            def drive(w):
                try:
                    w.run()
                except Exception as e:  # noqa: BLE001 - propagated after join
                    errors.append(e)
                    stop.set()  # release peers stuck retrying against us

            threads = [threading.Thread(target=drive, args=(w,), name=f"fdml-worker-{w.party_id}")
                       for w in workers]
            for th in threads:
                th.start()
            for th in threads:
                th.join()
            if errors:
                primary = next((e for e in errors if not isinstance(e, PeerFailure)),
                               errors[0])
                raise TrainingError(f"worker failed: {primary}") from primary
            epoch_marks = [time.perf_counter() - start] * cfg.epochs
        elapsed = time.perf_counter() - start

        trace = _evaluate_epochs(workers, kinds, test_stores, test_labels, cfg.lam,
                                 scheme, workers[0].batch_losses, epoch_marks)
        return TrainingResult(
            blocks=[w.params for w in workers],
            kinds=kinds,
            trace=trace,
            elapsed=elapsed,
            rejections=dict(coordinator.rejections),
        )
    finally:
        for c in carriers:
            c.close()
        if server is not None:
            server.stop()
