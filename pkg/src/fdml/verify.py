"""Self-contained verification suites runnable without any dataset.

Each suite returns (name, passed, detail); the CLI prints one line per
suite and exits nonzero if any fails.
"""

from __future__ import annotations

import numpy as np

from fdml import analysis, transport
from fdml.model import (
    LinearLogit,
    FeedForward,
    LocalFeatureVector,
    aggregate,
    log_loss,
)
from fdml.schedule import SampleSchedule
from fdml.synthetic import two_party_instance

SUITES = ("gradients", "lemma1", "protocol", "schedule")


def finite_difference_gradient(kind, params, feat, label, lam, step=1e-5):
    """Central differences of loss(aggregate(alpha)) + lam * regularizer."""

    def objective(p):
        alpha = kind.local_prediction(p, feat)
        return float(log_loss(aggregate([alpha]), label)) + lam * kind.regularizer(p, feat.dim)

    g = np.zeros_like(params)
    for i in range(params.size):
        up = params.copy()
        dn = params.copy()
        up[i] += step
        dn[i] -= step
        g[i] = (objective(up) - objective(dn)) / (2 * step)
    return g


def check_gradients(n_cases: int = 100, rel_tol: float = 1e-4, seed: int = 0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for case in range(n_cases):
        kind = LinearLogit() if case % 2 == 0 else FeedForward(hidden=5)
        d = int(rng.integers(2, 8))
        nnz = int(rng.integers(1, d + 1))
        idx = np.sort(rng.choice(d, size=nnz, replace=False))
        feat = LocalFeatureVector(0, idx, rng.normal(size=nnz), d)
        params = rng.normal(scale=0.5, size=kind.param_dim(d))
        label = float(rng.integers(0, 2))
        lam = float(rng.choice([0.0, 0.01, 0.1]))
        alpha = kind.local_prediction(params, feat)
        h = aggregate([alpha]) - label
        got = kind.partial_gradient(params, feat, h, lam)
        want = finite_difference_gradient(kind, params, feat, label, lam)
        denom = np.maximum(np.abs(want), 1e-6)
        worst = max(worst, float(np.max(np.abs(got - want) / denom)))
    return worst <= rel_tol, f"max relative error {worst:.2e} over {n_cases} cases"


def check_lemma_identity(n_steps: int = 200, tau: int = 16, tol: float = 1e-8, seed: int = 0):
    ds, _, stores = two_party_instance(n=60, d=8, seed=seed)
    run = analysis.simulate_stale_run(stores, ds.labels, lam=1e-3, eta=0.5,
                                      batch=1, epochs=(n_steps // 60) + 1,
                                      tau=tau, seed=seed)
    optimum, _, _ = analysis.optimum_by_gradient_descent(stores, ds.labels, lam=1e-3)
    worst = max(analysis.lemma_residual(rec, optimum) for rec in run.records[:n_steps])
    return worst < tol, f"max residual {worst:.2e} over {n_steps} stale steps (tau={tau})"


def check_protocol(n_messages: int = 2000, seed: int = 0):
    rng = np.random.default_rng(seed)
    for _ in range(n_messages):
        msg = _random_message(rng)
        if transport.decode(transport.encode(msg)) != msg:
            return False, f"round trip failed for {msg!r}"
    crashes = 0
    for _ in range(n_messages):
        blob = rng.bytes(int(rng.integers(0, 64)))
        try:
            transport.decode(blob)
        except transport.DecodeError:
            pass
        except Exception:  # noqa: BLE001 - any other escape is the failure
            crashes += 1
    return crashes == 0, f"{n_messages} round trips, {n_messages} fuzz frames, {crashes} crashes"


def _random_message(rng):
    kind = int(rng.integers(0, 6))
    n = int(rng.integers(0, 8))
    ids = tuple(int(x) for x in rng.integers(0, 2**40, size=n))
    vals = tuple(float(x) for x in rng.normal(size=n))
    if kind == 0:
        return transport.PushRequest(int(rng.integers(0, 2**16)), int(rng.integers(0, 2**40)), ids, vals)
    if kind == 1:
        return transport.PushAck(int(rng.integers(0, 2**40)))
    if kind == 2:
        return transport.PullRequest(int(rng.integers(0, 2**16)), int(rng.integers(0, 2**40)), ids)
    if kind == 3:
        return transport.PullGrant(int(rng.integers(0, 2**40)), vals)
    if kind == 4:
        return transport.PullReject(int(rng.integers(0, 2**40)), int(rng.integers(0, 2**40)))
    return transport.ErrorReply(int(rng.integers(0, 2**16)), "detail-" + str(int(rng.integers(0, 1000))))


def check_schedule(seed: int = 7):
    a = SampleSchedule(seed, 101, 8, 3)
    b = SampleSchedule(seed, 101, 8, 3)
    if [x.tolist() for x in a] != [x.tolist() for x in b]:
        return False, "same seed produced different schedules"
    for e in range(3):
        epoch = np.concatenate(list(a)[e * a.steps_per_epoch : (e + 1) * a.steps_per_epoch])
        if sorted(epoch.tolist()) != list(range(101)):
            return False, f"epoch {e} is not a permutation"
    return True, "deterministic, every epoch a permutation"


def run_suites(names=None):
    checks = {
        "gradients": check_gradients,
        "lemma1": check_lemma_identity,
        "protocol": check_protocol,
        "schedule": check_schedule,
    }
    names = list(names) if names else list(SUITES)
    results = []
    for name in names:
        if name not in checks:
            results.append((name, False, "unknown suite"))
            continue
        passed, detail = checks[name]()
        results.append((name, passed, detail))
    return results
