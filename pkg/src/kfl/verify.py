"""Oracle checks shared by the ``kfl verify`` command and the acceptance tests.

Each oracle recomputes a quantity by a route independent of the code under
test: brute-force grids, finite differences, exhaustive subset search or a
direct residual.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .allocation import allocate_bandwidth, min_bandwidth_share, optimal_power
from .core.model import LocalModel, init_model, loss_and_grads
from .numerics import BRANCH_POINT, lambert_w0
from .scheduler import (
    SchedulerConfig,
    VirtualQueueState,
    drift_plus_penalty,
    schedule_round,
)
from .system_model import (
    LN2,
    ChannelDraw,
    ChannelModel,
    DeviceProfile,
    PayloadSpec,
    channel_gain,
    compute_energy,
    upload_window,
    uplink_rate,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


# --- Lambert W ---------------------------------------------------------------

def lambert_grid(n: int = 10_000) -> np.ndarray:
    """Log-spaced grid on ``[-1/e + 1e-9, 1e9]``, dense on both sides of zero."""
    lo = BRANCH_POINT + 1e-9
    neg = -np.logspace(math.log10(-lo), -12, n // 2)
    pos = np.logspace(-12, 9, n - n // 2)
    return np.concatenate([neg, pos])


def check_lambert(n: int = 10_000, tol: float = 1e-10) -> CheckResult:
    worst = 0.0
    for x in lambert_grid(n):
        w = lambert_w0(float(x))
        worst = max(worst, abs(w * math.exp(w) - x) / max(1.0, abs(x)))
    return CheckResult("lambert_identity", worst <= tol,
                       f"max |W e^W - x| / max(1,|x|) = {worst:.3e} over {n} points (tol {tol:g})")


# --- random allocation instances ---------------------------------------------

@dataclass
class AllocInstance:
    profiles: list[DeviceProfile]
    gains: list[float]
    queues: list[float]
    payload: PayloadSpec
    model: ChannelModel
    deadline: float = 1.0
    local_iters: int = 5


def random_instance(n: int, rng: np.random.Generator, zero_queue_prob: float = 0.0,
                    ) -> AllocInstance:
    """A random scheduled set whose minimum shares fit the band."""
    model = ChannelModel()
    while True:
        profiles = [DeviceProfile(i, [int(rng.integers(50, 500))],
                                  float(rng.choice([0.85e9, 1.12e9, 1.2e9, 1.3e9])),
                                  1000.0, 1.0, 1.0, float(rng.uniform(50, 500)))
                    for i in range(n)]
        gains = [channel_gain(model, p.distance, float(rng.exponential())) for p in profiles]
        queues = [float(rng.uniform(0.1, 10)) for _ in range(n)]
        for i in range(n):
            if rng.random() < zero_queue_prob:
                queues[i] = 0.0
        payload = PayloadSpec(int(rng.integers(1000, 60_000)), 32)
        mins = [min_bandwidth_share(p, h, 1.0, payload, model, 5) for p, h in zip(profiles, gains)]
        if all(m is not None for m in mins) and sum(mins) < 0.9:
            return AllocInstance(profiles, gains, queues, payload, model)


def _weighted_energy_grid(inst: AllocInstance, shares: Sequence[np.ndarray]) -> np.ndarray:
    total = 0.0
    for prof, h, q, theta in zip(inst.profiles, inst.gains, inst.queues, shares):
        window = upload_window(prof, inst.deadline, inst.local_iters)
        band = theta * inst.model.bandwidth_total
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            e_up = band * window * inst.model.noise_psd / h * np.expm1(
                inst.payload.bits * LN2 / (band * window))
        total = total + q * (compute_energy(prof, inst.local_iters) + e_up)
    return total


def simplex_grid_oracle(inst: AllocInstance, resolution: float = 1e-3,
                        refine: int = 4) -> tuple[float, np.ndarray]:
    """Minimum of sum_k q_k E_k over the share simplex by grid search plus zooming.

    The first ``n-1`` shares are gridded; the last takes the remainder.
    Points violating a minimum share are discarded.
    """
    n = len(inst.profiles)
    mins = np.array([min_bandwidth_share(p, h, inst.deadline, inst.payload, inst.model,
                                         inst.local_iters)
                     for p, h in zip(inst.profiles, inst.gains)])
    axes = [np.arange(resolution, 1.0, resolution)] * (n - 1)
    best_val, best_pt = math.inf, None
    step = resolution
    for level in range(refine + 1):
        mesh = np.meshgrid(*axes, indexing="ij")
        last = 1.0 - sum(mesh)
        shares = [*mesh, last]
        ok = np.ones_like(last, dtype=bool)
        for theta, m in zip(shares, mins):
            ok &= theta >= m
        vals = np.where(ok, _weighted_energy_grid(inst, shares), np.inf)
        idx = np.unravel_index(np.argmin(vals), vals.shape)
        if vals[idx] < best_val:
            best_val = float(vals[idx])
            best_pt = np.array([s[idx] for s in shares])
        if best_pt is None:
            break
        step /= 10.0
        axes = [best_pt[i] + step * np.arange(-10, 11) for i in range(n - 1)]
        axes = [a[(a > 0) & (a < 1)] for a in axes]
    return best_val, best_pt


def check_allocation(instances: int = 100, seed: int = 0, rel_tol: float = 1e-4,
                     sum_tol: float = 1e-6) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_gap, worst_sum, power_ok = -math.inf, 0.0, True
    for i in range(instances):
        inst = random_instance(2 + i % 2, rng)
        res = allocate_bandwidth(inst.profiles, inst.queues, inst.gains, inst.deadline,
                                 inst.payload, inst.model, inst.local_iters)
        value = res.weighted_energy({p.id: q for p, q in zip(inst.profiles, inst.queues)})
        oracle, _ = simplex_grid_oracle(inst)
        worst_gap = max(worst_gap, (value - oracle) / abs(oracle))
        worst_sum = max(worst_sum, abs(sum(res.shares.values()) - 1.0))
        power_ok &= all(res.powers[p.id] <= p.max_power + 1e-9 for p in inst.profiles)
    passed = worst_gap <= rel_tol and worst_sum <= sum_tol and power_ok
    return CheckResult("allocation_oracle", passed,
                       f"{instances} instances: worst relative excess over grid {worst_gap:.2e} "
                       f"(tol {rel_tol:g}), worst |sum-1| {worst_sum:.2e}, p<=p_max {power_ok}")


# --- power / deadline identity -----------------------------------------------

def check_power_identity(trials: int = 200, seed: int = 1, tol: float = 1e-9) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        inst = random_instance(1, rng)
        prof, h = inst.profiles[0], inst.gains[0]
        theta = float(rng.uniform(0.01, 1.0))
        power = optimal_power(theta, prof, h, inst.deadline, inst.payload, inst.model,
                              inst.local_iters)
        window = upload_window(prof, inst.deadline, inst.local_iters)
        delivered = uplink_rate(theta, power, h, inst.model) * window
        worst = max(worst, abs(delivered - inst.payload.bits) / inst.payload.bits)
    return CheckResult("power_identity", worst <= tol,
                       f"max relative error of rate*(T_max - T_L) vs Q*q = {worst:.2e} (tol {tol:g})")


# --- gradient ----------------------------------------------------------------

def toy_problem(rng: np.random.Generator) -> tuple[LocalModel, np.ndarray, np.ndarray, np.ndarray]:
    """20-parameter model (3 -> 2 -> 2 features -> 2 classes) with random data and prototypes."""
    model = init_model(3, (2,), 2, 2, rng)
    model = model.with_flat(rng.normal(size=model.num_params))
    X = rng.normal(size=(6, 3))
    y = np.array([0, 1, 0, 1, 1, 0])
    protos = rng.normal(size=(2, 2))
    return model, X, y, protos


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                     step: float = 1e-5) -> np.ndarray:
    grad = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (f(x + e) - f(x - e)) / (2 * step)
    return grad


def gradient_error(model: LocalModel, X, y, protos, weight: float, step: float = 1e-5) -> float:
    _, g_ext, g_pred = loss_and_grads(model, X, y, protos, weight)
    analytic = np.concatenate([a.ravel() for layer in g_ext + g_pred for a in layer])
    numeric = numeric_gradient(
        lambda v: loss_and_grads(model.with_flat(v), X, y, protos, weight)[0].total,
        model.flat(), step)
    return float(np.linalg.norm(analytic - numeric)
                 / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-300))


def check_gradient(points: int = 50, seed: int = 2, tol: float = 1e-4) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(points):
        model, X, y, protos = toy_problem(rng)
        worst = max(worst, gradient_error(model, X, y, protos, float(rng.uniform(0.01, 1.0))))
    return CheckResult("gradient_check", worst <= tol,
                       f"max relative error {worst:.2e} over {points} points (tol {tol:g})")


# --- scheduler ---------------------------------------------------------------

@dataclass
class SchedInstance:
    profiles: list[DeviceProfile]
    channel: ChannelDraw
    state: VirtualQueueState
    config: SchedulerConfig
    payload: PayloadSpec
    model: ChannelModel


def random_round(k: int, rng: np.random.Generator) -> SchedInstance:
    model = ChannelModel()
    profiles = [DeviceProfile(i, [int(rng.integers(20, 200))],
                              float(rng.choice([0.85e9, 1.12e9, 1.2e9, 1.3e9])),
                              float(rng.uniform(1e5, 1.5e6)), 0.01, 0.6,
                              float(rng.uniform(10, 100)))
                for i in range(k)]
    gains = np.array([channel_gain(model, p.distance, float(rng.exponential()))
                      for p in profiles])
    horizon = 30
    round_ = int(rng.integers(horizon))
    queues = np.where(rng.random(k) < 0.3, 0.0, rng.uniform(0, 0.1, k))
    config = SchedulerConfig(tradeoff_v=float(10 ** rng.uniform(-6, -3)), horizon=horizon,
                             deadline=1.0, local_iters=5)
    return SchedInstance(profiles, ChannelDraw(gains, round_),
                         VirtualQueueState(queues, round_), config,
                         PayloadSpec(int(rng.integers(80, 20_000))), model)


def _set_value(inst: SchedInstance, members: Sequence[int]) -> Optional[float]:
    if not members:
        return 0.0
    profs = [inst.profiles[k] for k in members]
    alloc = allocate_bandwidth(profs, [float(inst.state.backlogs[k]) for k in members],
                               [float(inst.channel.gains[k]) for k in members],
                               inst.config.deadline, inst.payload, inst.model,
                               inst.config.local_iters)
    if not alloc.feasible:
        return None
    queues = {k: float(inst.state.backlogs[k]) for k in members}
    sizes = {k: inst.profiles[k].total_samples for k in members}
    return drift_plus_penalty(members, alloc.energies, queues, sizes, inst.config,
                              inst.state.round)


def brute_force_schedule(inst: SchedInstance) -> float:
    best = 0.0
    ids = [p.id for p in inst.profiles]
    for r in range(1, len(ids) + 1):
        for combo in itertools.combinations(ids, r):
            value = _set_value(inst, combo)
            if value is not None:
                best = min(best, value)
    return best


def check_scheduler(rounds: int = 50, seed: int = 3, max_devices: int = 8) -> tuple[CheckResult, float]:
    """Prefix-family equality (asserted) and median brute-force gap (reported)."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    gaps = []
    for _ in range(rounds):
        inst = random_round(int(rng.integers(2, max_devices + 1)), rng)
        decision = schedule_round(inst.state, inst.profiles, inst.channel, inst.config,
                                  inst.payload, inst.model)
        family = [0.0] + [v for v in (_set_value(inst, s) for s, _ in decision.candidates)
                          if v is not None]
        if decision.objective != min(family):
            mismatches += 1
        brute = brute_force_schedule(inst)
        gaps.append(0.0 if brute == 0 else (decision.objective - brute) / abs(brute))
    median_gap = float(np.median(gaps))
    return (CheckResult("scheduler_prefix_family", mismatches == 0,
                        f"{rounds} rounds, {mismatches} mismatches; median brute-force gap "
                        f"{median_gap:.2%}"), median_gap)


def run_all(quick: bool = True) -> list[CheckResult]:
    scale = 0.2 if quick else 1.0
    return [
        check_lambert(int(10_000 * scale)),
        check_power_identity(int(200 * scale)),
        check_allocation(max(2, int(100 * scale))),
        check_gradient(max(2, int(50 * scale))),
        check_scheduler(max(2, int(50 * scale)))[0],
    ]
