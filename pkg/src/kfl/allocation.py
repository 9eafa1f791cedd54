"""Per-round transmit power control and FDMA bandwidth allocation.

For a fixed scheduled set the uplink finishes exactly at the deadline, so each
device's power is a closed-form function of its bandwidth share. The shares
then come from the KKT conditions of the queue-weighted energy problem:
``theta_k(mu)`` is a Lambert-W expression in the simplex multiplier ``mu``, and
``mu`` is found by halving ``[0, mu_ub]`` until the shares fill the band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .numerics import DEFAULT_TOL, INV_E, Tolerance, bisect, lambert_w0
from .system_model import (
    LN2,
    ChannelModel,
    DeviceProfile,
    PayloadSpec,
    compute_energy,
    upload_energy,
    upload_window,
    uplink_rate,
)

SUM_TOL = 1e-6
MU_REL_TOL = 1e-9


class DeadlineError(ValueError):
    """Local training alone already exceeds the round deadline."""


@dataclass
class AllocationResult:
    shares: dict[int, float] = field(default_factory=dict)
    powers: dict[int, float] = field(default_factory=dict)
    energies: dict[int, float] = field(default_factory=dict)
    multiplier: float = 0.0
    feasible: bool = True
    min_shares: dict[int, float] = field(default_factory=dict)

    def weighted_energy(self, queues: Mapping[int, float]) -> float:
        return sum(queues[k] * e for k, e in self.energies.items())


def _window(profile: DeviceProfile, deadline: float, local_iters: int) -> float:
    window = upload_window(profile, deadline, local_iters)
    if window <= 0:
        raise DeadlineError(
            f"device {profile.id}: local training takes {deadline - window:.4g}s "
            f">= deadline {deadline}s")
    return window


def _psi(x: float) -> float:
    # (x - 1) e^x + 1 = sum_{n>=2} (n-1) x^n / n!
    if x > 700.0:
        return math.inf
    if abs(x) < 1e-2:
        term, total = x * x / 2.0, 0.0
        for n in range(2, 12):
            total += (n - 1) * term
            term *= x / (n + 1)
        return total
    return x * math.exp(x) - math.expm1(x)


def optimal_power(share: float, profile: DeviceProfile, gain: float, deadline: float,
                  payload: PayloadSpec, model: ChannelModel, local_iters: int) -> float:
    """Smallest power that uploads the payload in exactly the time left after training."""
    window = _window(profile, deadline, local_iters)
    band = share * model.bandwidth_total
    exponent = payload.bits * LN2 / (window * band)
    if exponent > 700.0:
        return math.inf
    return band * model.noise_psd / gain * math.expm1(exponent)


def min_bandwidth_share(profile: DeviceProfile, gain: float, deadline: float,
                        payload: PayloadSpec, model: ChannelModel, local_iters: int,
                        tol: Tolerance = DEFAULT_TOL) -> Optional[float]:
    """Least share meeting the deadline at maximum power, or None if the whole band is not enough.

    The returned value is the upper end of the final bisection bracket, so
    ``optimal_power`` at this share never exceeds ``max_power``.
    """
    window = _window(profile, deadline, local_iters)
    required = payload.bits / window
    if required == 0:
        return 0.0

    def slack(theta: float) -> float:
        return uplink_rate(theta, profile.max_power, gain, model) - required

    if slack(1.0) < 0:
        return None
    hi = 1.0
    while hi > 1e-300 and slack(hi * 0.1) >= 0:
        hi *= 0.1
    lo = hi * 0.1
    _, hi = bisect(slack, lo, hi, Tolerance(tol.abs_tol * hi, tol.max_iter),
                   return_bracket=True)
    return hi


def theta_of_mu(mu: float, profile: DeviceProfile, gain: float, queue: float,
                deadline: float, payload: PayloadSpec, model: ChannelModel,
                local_iters: int) -> float:
    """Stationary share for multiplier ``mu``; ``inf`` at ``mu = 0`` (callers clamp)."""
    if queue <= 0:
        raise ValueError(f"device {profile.id}: theta(mu) needs a positive queue")
    window = _window(profile, deadline, local_iters)
    a = payload.bits * LN2 / (window * model.bandwidth_total)
    c = model.bandwidth_total * model.noise_psd * queue * window / gain
    if mu <= 0:
        return math.inf
    m = mu / c
    if m < 1e-8:
        x = math.sqrt(2.0 * m)  # psi(x) ~ x^2/2; the Lambert argument would round to -1/e
    else:
        x = lambert_w0(m * INV_E - INV_E) + 1.0
    # Newton polish on psi(x) = m; the Lambert argument loses digits near -1/e
    for _ in range(4):
        if x <= 0 or x > 700.0:
            break
        x_new = x - (_psi(x) - m) / (x * math.exp(x))
        if x_new <= 0:
            x_new = 0.5 * x
        if x_new == x:
            break
        x = x_new
    if x <= 0:
        return math.inf
    return a / x


def mu_upper_bound(profiles: Sequence[DeviceProfile], queues: Sequence[float],
                   gains: Sequence[float], deadline: float, payload: PayloadSpec,
                   model: ChannelModel, local_iters: int) -> float:
    """Multiplier at which every device's stationary share is at most ``1/|S|``."""
    n = len(profiles)
    best = 0.0
    for prof, q, h in zip(profiles, queues, gains):
        window = _window(prof, deadline, local_iters)
        phi = payload.bits * n * LN2 / (window * model.bandwidth_total)
        val = model.bandwidth_total * model.noise_psd * q * window * _psi(phi) / h
        best = max(best, val)
    return min(best, 1e300)


def allocate_bandwidth(profiles: Sequence[DeviceProfile], queues: Sequence[float],
                       gains: Sequence[float], deadline: float, payload: PayloadSpec,
                       model: ChannelModel, local_iters: int,
                       tol: Tolerance = DEFAULT_TOL, sum_tol: float = SUM_TOL,
                       mu_rel_tol: float = MU_REL_TOL) -> AllocationResult:
    """Queue-weighted energy-minimal shares and powers for one scheduled set.

    Devices with zero queue are pinned at their minimum share; the rest of
    the band goes to positive-queue devices through the multiplier search on
    ``sum_k max(theta_k(mu), theta_min_k)``.
    """
    if len(profiles) == 0:
        return AllocationResult()
    ids = [p.id for p in profiles]
    windows = {}
    theta_min = {}
    for prof, h in zip(profiles, gains):
        window = upload_window(prof, deadline, local_iters)
        if window <= 0:
            return AllocationResult(feasible=False)
        tmin = min_bandwidth_share(prof, h, deadline, payload, model, local_iters, tol)
        if tmin is None:
            return AllocationResult(feasible=False)
        windows[prof.id] = window
        theta_min[prof.id] = tmin
    if sum(theta_min.values()) > 1.0 + 1e-12:
        return AllocationResult(feasible=False, min_shares=theta_min)

    shares = {}
    active = [i for i, q in enumerate(queues) if q > 0]
    for i, q in enumerate(queues):
        if q <= 0:
            shares[ids[i]] = theta_min[ids[i]]
    budget = 1.0 - sum(shares.values())
    mu = 0.0

    if active:
        def clamped(i: int, mu_: float) -> float:
            prof = profiles[i]
            theta = theta_of_mu(mu_, prof, gains[i], queues[i], deadline, payload, model,
                                local_iters)
            return max(theta, theta_min[prof.id])

        def total(mu_: float) -> float:
            return sum(clamped(i, mu_) for i in active)

        ub = mu_upper_bound([profiles[i] for i in active], [queues[i] for i in active],
                            [gains[i] for i in active], deadline, payload, model,
                            local_iters)
        # minimum-share clamps can push the sum past the budget at the nominal bound
        for _ in range(2000):
            if total(ub) <= budget or ub >= 1e300:
                break
            ub *= 2.0
        lb = 0.0
        eps = mu_rel_tol * ub
        mu = ub
        for _ in range(10_000):
            if ub - lb < eps:
                mu = ub
                break
            mu = 0.5 * (lb + ub)
            s = total(mu)
            if s > budget:
                lb = mu
            elif s < budget - sum_tol:
                ub = mu
            else:
                break
        for i in active:
            shares[ids[i]] = clamped(i, mu)

    result = AllocationResult(multiplier=mu, min_shares=theta_min)
    for prof, h in zip(profiles, gains):
        k = prof.id
        theta = shares[k]
        result.shares[k] = theta
        result.powers[k] = optimal_power(theta, prof, h, deadline, payload, model, local_iters)
        result.energies[k] = (compute_energy(prof, local_iters)
                              + upload_energy(theta, windows[k], h, payload, model))
    return result
