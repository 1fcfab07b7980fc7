"""Convergence-analysis instrumentation: regret traces, the per-step
staleness identity, and empirical estimates of the constants entering the
theoretical regret envelope.

Everything here runs single-context over an instrumented simulation of the
stale update rule; production training never pays for the fresh-gradient
recomputation these checks need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fdml.model import h_term, log_loss, sigmoid, submodel_from_name
from fdml.schedule import SampleSchedule, learning_rate


class InstrumentationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# objective helpers over a list of per-party blocks


def batch_objective(blocks, kinds, stores, labels, ids, lam) -> float:
    """Per-iteration objective: mean batch loss plus the regularizer."""
    s = np.zeros(len(ids))
    for j, (b, k) in enumerate(zip(blocks, kinds)):
        s += k.batch_prediction(b, stores[j][ids])
    reg = sum(lam * k.regularizer(b, stores[j].shape[1])
              for j, (b, k) in enumerate(zip(blocks, kinds)))
    return float(np.mean(log_loss(sigmoid(s), labels[ids]))) + reg


def full_objective(blocks, kinds, stores, labels, lam) -> float:
    n = stores[0].shape[0]
    return batch_objective(blocks, kinds, stores, labels, np.arange(n), lam)


def full_gradient(blocks, kinds, stores, labels, lam):
    """Per-block full-batch (mean) gradients."""
    n = stores[0].shape[0]
    ids = np.arange(n)
    s = np.zeros(n)
    for j, (b, k) in enumerate(zip(blocks, kinds)):
        s += k.batch_prediction(b, stores[j][ids])
    h = h_term(s, labels)
    return [k.batch_gradient(b, stores[j], h, lam, "mean")
            for j, (b, k) in enumerate(zip(blocks, kinds))]


def batch_block_gradients(blocks, kinds, stores, labels, ids, lam, view_blocks=None):
    """Per-block gradients of the batch objective; the prediction sum may be
    taken at a different (stale) set of blocks via ``view_blocks``."""
    view = view_blocks if view_blocks is not None else blocks
    s = np.zeros(len(ids))
    for j, (b, k) in enumerate(zip(view, kinds)):
        s += k.batch_prediction(b, stores[j][ids])
    h = h_term(s, labels[ids])
    return [k.batch_gradient(b, stores[j][ids], h, lam, "mean")
            for j, (b, k) in enumerate(zip(blocks, kinds))]


# ---------------------------------------------------------------------------
# reference optimum


def optimum_by_gradient_descent(stores, labels, lam, model: str = "lr",
                                grad_tol: float = 1e-10, max_iters: int = 200_000):
    """Full-batch gradient descent (Barzilai-Borwein steps with an Armijo
    fallback) on the convex composite objective, run to tiny gradient norm."""
    kinds = [submodel_from_name(model) for _ in stores]
    blocks = [k.init_params(s.shape[1]) for k, s in zip(kinds, stores)]

    def flat(bs):
        return np.concatenate(bs)

    def unflat(x):
        out = []
        off = 0
        for b in blocks:
            out.append(x[off : off + b.size])
            off += b.size
        return out

    x = flat(blocks)
    g = flat(full_gradient(unflat(x), kinds, stores, labels, lam))
    f = full_objective(unflat(x), kinds, stores, labels, lam)
    step = 1.0
    prev_x, prev_g = None, None
    for _ in range(max_iters):
        gn = np.linalg.norm(g)
        if gn < grad_tol:
            return unflat(x), kinds, f
        if prev_x is not None:
            sx = x - prev_x
            sg = g - prev_g
            denom = float(np.dot(sx, sg))
            if denom > 0:
                step = float(np.dot(sx, sx)) / denom
        # Armijo backtracking from the BB step
        while True:
            x_new = x - step * g
            f_new = full_objective(unflat(x_new), kinds, stores, labels, lam)
            if f_new <= f - 1e-4 * step * gn * gn or step < 1e-18:
                break
            step *= 0.5
        prev_x, prev_g = x, g
        x, f = x_new, f_new
        g = flat(full_gradient(unflat(x), kinds, stores, labels, lam))
    raise InstrumentationError(
        f"gradient descent oracle did not reach |grad| < {grad_tol}")


# ---------------------------------------------------------------------------
# instrumented stale simulation


@dataclass
class StepRecord:
    t: int
    eta_t: float
    blocks_before: list
    blocks_after: list
    stale_gradients: list
    fresh_gradients: list
    objective: float  # F_t evaluated at the fresh blocks x_t
    noise_applied: bool = False


@dataclass
class StaleRunResult:
    records: list
    final_blocks: list
    kinds: list


def simulate_stale_run(stores, labels, *, model: str = "lr", lam: float = 1e-4,
                       eta: float = 0.5, batch: int = 1, epochs: int = 1,
                       tau: int = 0, seed: int = 0, lag_seed: int = 1,
                       keep_records: bool = True) -> StaleRunResult:
    """Run the stale block-wise update rule in one context, drawing each
    cross-party lag uniformly from [0, tau] against a retained block history.

    Records both the gradient actually applied (stale prediction sums) and
    the fresh-block gradient, which is what the per-step identity check
    consumes.
    """
    m = len(stores)
    n = stores[0].shape[0]
    kinds = [submodel_from_name(model) for _ in range(m)]
    blocks = [k.init_params(s.shape[1], seed=j) for j, (k, s) in enumerate(zip(kinds, stores))]
    schedule = SampleSchedule(seed, n, batch, epochs)
    rng = np.random.default_rng(lag_seed)
    history = [list(blocks)]  # history[q] = blocks at iteration q+1's start
    records = []
    for t in range(1, schedule.total_steps + 1):
        ids = schedule.batch(t)
        fresh = batch_block_gradients(blocks, kinds, stores, labels, ids, lam)
        stale = []
        for j in range(m):
            view = []
            for k in range(m):
                if k == j:
                    view.append(blocks[k])
                else:
                    lag = int(rng.integers(0, tau + 1))
                    view.append(history[max(0, t - 1 - lag)][k])
            stale.append(batch_block_gradients(blocks, kinds, stores, labels, ids, lam,
                                               view_blocks=view)[j])
        eta_t = learning_rate(eta, t)
        new_blocks = [blocks[j] - eta_t * stale[j] for j in range(m)]
        if keep_records:
            records.append(StepRecord(
                t=t, eta_t=eta_t,
                blocks_before=[b.copy() for b in blocks],
                blocks_after=[b.copy() for b in new_blocks],
                stale_gradients=stale, fresh_gradients=fresh,
                objective=batch_objective(blocks, kinds, stores, labels, ids, lam),
            ))
        blocks = new_blocks
        history.append(list(blocks))
    return StaleRunResult(records=records, final_blocks=blocks, kinds=kinds)


# ---------------------------------------------------------------------------
# the per-step identity and the regret machinery


def lemma_residual(record: StepRecord, optimum_blocks) -> float:
    """|LHS - RHS| of the per-step rearrangement identity relating the fresh
    descent direction, the applied stale step and the distance change.

    Exact in exact arithmetic for any staleness pattern, provided the step
    was exactly x_{t+1} = x_t - eta_t * stale_gradient.
    """
    if record.noise_applied:
        raise InstrumentationError("identity does not apply to perturbed steps")
    lhs = sum(float(np.dot(xb - xs, gf)) for xb, xs, gf in
              zip(record.blocks_before, optimum_blocks, record.fresh_gradients))
    d_before = 0.5 * sum(float(np.sum((xb - xs) ** 2)) for xb, xs in
                         zip(record.blocks_before, optimum_blocks))
    d_after = 0.5 * sum(float(np.sum((xa - xs) ** 2)) for xa, xs in
                        zip(record.blocks_after, optimum_blocks))
    rhs = 0.5 * record.eta_t * sum(float(np.dot(g, g)) for g in record.stale_gradients)
    rhs -= (d_after - d_before) / record.eta_t
    rhs += sum(float(np.dot(xb - xs, gf - gs)) for xb, xs, gf, gs in
               zip(record.blocks_before, optimum_blocks,
                   record.fresh_gradients, record.stale_gradients))
    return abs(lhs - rhs)


def regret_trace(step_objectives, f_star: float, checkpoints):
    """R(T') = (1/T') sum_{t<=T'} F_t(x_t) - F(x_*) at each checkpoint."""
    objectives = np.asarray(step_objectives, dtype=np.float64)
    out = []
    for tp in checkpoints:
        if not 1 <= tp <= objectives.size:
            raise InstrumentationError(f"checkpoint {tp} outside run of length {objectives.size}")
        out.append((tp, float(np.mean(objectives[:tp]) - f_star)))
    return out


@dataclass
class AssumptionProbe:
    """Empirical stand-ins for the constants in the regret bound."""

    gradient_bound: float = 0.0   # G: max observed ||grad F_t||
    diameter: float = 0.0         # D: max observed sqrt(2 D_t)
    block_lipschitz: list = field(default_factory=list)

    @property
    def l_max(self) -> float:
        return max(self.block_lipschitz) if self.block_lipschitz else 0.0

    def observe_step(self, record: StepRecord, optimum_blocks):
        g = math.sqrt(sum(float(np.dot(gf, gf)) for gf in record.fresh_gradients))
        self.gradient_bound = max(self.gradient_bound, g)
        d2 = sum(float(np.sum((xb - xs) ** 2)) for xb, xs in
                 zip(record.blocks_before, optimum_blocks))
        self.diameter = max(self.diameter, math.sqrt(d2))

    def estimate_lipschitz(self, stores, labels, kinds, lam, reference_blocks,
                           n_pairs: int = 50, radius: float = 1.0, seed: int = 0):
        rng = np.random.default_rng(seed)
        m = len(stores)
        n = stores[0].shape[0]
        estimates = [0.0] * m
        for _ in range(n_pairs):
            ids = rng.integers(0, n, size=min(32, n))
            x1 = [b + rng.uniform(-radius, radius, b.size) for b in reference_blocks]
            x2 = [b + rng.uniform(-radius, radius, b.size) for b in reference_blocks]
            g1 = batch_block_gradients(x1, kinds, stores, labels, ids, lam)
            g2 = batch_block_gradients(x2, kinds, stores, labels, ids, lam)
            dx = math.sqrt(sum(float(np.sum((a - b) ** 2)) for a, b in zip(x1, x2)))
            if dx == 0:
                continue
            for j in range(m):
                ratio = float(np.linalg.norm(g1[j] - g2[j])) / dx
                estimates[j] = max(estimates[j], ratio)
        self.block_lipschitz = estimates
        return estimates


def regret_envelope(T: int, *, eta: float, m: int, tau: int,
                    gradient_bound: float, diameter: float, l_max: float) -> float:
    """Upper envelope on the average regret implied by the probed constants.

    Conservative by construction: the probe under-estimates nothing it saw
    and the bound itself is loose.
    """
    g, d = gradient_bound, diameter
    first = eta * m * g * g / math.sqrt(T)
    second = d * d / (eta * math.sqrt(T))
    third = 0.5 * g * d * m ** 1.5 * l_max * eta * tau / math.sqrt(T) * ((tau + 1) / math.sqrt(T) + 4.0)
    return first + second + third


def inv_sqrt_sum_bounded(a: int, b: int) -> bool:
    """sum_{t=a}^{b} t^{-1/2} <= 2(sqrt(b) - sqrt(a-1))."""
    t = np.arange(a, b + 1, dtype=np.float64)
    return float(np.sum(1.0 / np.sqrt(t))) <= 2.0 * (math.sqrt(b) - math.sqrt(a - 1))
