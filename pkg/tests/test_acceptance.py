"""Acceptance criteria, each checked at its stated tolerance.

Every test records one ``[PASS]``/``[FAIL]`` line; pytest prints them in an
"acceptance criteria" section at the end of the run. Running this file as a
script prints the same lines directly.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from kfl.core.model import mlp_param_count
from kfl.core.training import HyperParams
from kfl.harness import ExperimentConfig, format_metrics, run_experiment
from kfl.harness.config import PatternConfig
from kfl.harness.runner import build_population, scheduler_config
from kfl.scheduler import energy_bound_report
from kfl.system_model import PayloadSpec
from kfl.verify import (check_allocation, check_gradient, check_lambert, check_power_identity,
                        check_scheduler)

SEEDS = range(5)


def report(number: int, name: str, passed: bool, detail: str, started: float) -> None:
    line = (f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name}: {detail} "
            f"({time.perf_counter() - started:.1f}s)")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def desk(**kw) -> ExperimentConfig:
    return ExperimentConfig(num_devices=20, classes_per_device=2, num_classes=10, **kw)


def test_criterion_01_communication_overhead():
    t0 = time.perf_counter()
    pay = PayloadSpec.for_knowledge(10, 64, model_params=553406)
    ratio = pay.overhead_ratio
    # per-round upload in bytes for one device against the full model in the same precision
    bytes_ratio = pay.bits // 8 / (553406 * 4)
    passed = (pay.knowledge_params == 640 and ratio == 640 / 553406
              and math.isclose(bytes_ratio, ratio, rel_tol=1e-15)
              and f"{100 * ratio:.2g}" == "0.12")
    report(1, "communication overhead", passed,
           f"{pay.knowledge_params}/553406 = {ratio:.7f} ({100 * ratio:.2g}%); "
           f"784-512-256-64-10 MLP has {mlp_param_count([784, 512, 256, 64, 10])} parameters",
           t0)


def test_criterion_02_lambert_identity():
    t0 = time.perf_counter()
    res = check_lambert(10_000, 1e-10)
    report(2, "Lambert W identity", res.passed, res.detail, t0)


def test_criterion_03_allocation_oracle():
    t0 = time.perf_counter()
    res = check_allocation(instances=100, rel_tol=1e-4, sum_tol=1e-6)
    report(3, "allocation vs simplex grid oracle", res.passed, res.detail, t0)


def test_criterion_04_power_deadline_identity():
    t0 = time.perf_counter()
    res = check_power_identity(trials=500, tol=1e-9)
    report(4, "power/deadline identity", res.passed, res.detail, t0)


def test_criterion_05_gradient_check():
    t0 = time.perf_counter()
    res = check_gradient(points=50, tol=1e-4)
    report(5, "knowledge-aided loss gradient", res.passed, res.detail, t0)


@pytest.mark.slow
def test_criterion_06_scheduler_prefix_family():
    t0 = time.perf_counter()
    res, median_gap = check_scheduler(rounds=50, max_devices=10)
    report(6, "scheduler prefix-family optimum", res.passed,
           res.detail + f" (median gap <= 5%: {median_gap <= 0.05}, reported only)", t0)


@pytest.mark.slow
def test_criterion_07_long_term_energy_bound():
    t0 = time.perf_counter()
    worst = -math.inf
    runs = 0
    for seed in SEEDS:
        for v in (1e-5, 1e-4, 1e-3):
            cfg = desk(seed=seed, horizon=50, tradeoff_v=v)
            res = run_experiment(cfg)
            rep = energy_bound_report(res.energy_trace, scheduler_config(cfg),
                                      build_population(cfg).profiles)
            worst = max(worst, rep.consumed / rep.bound)
            runs += 1
    report(7, "long-term energy bound", worst <= 1.0,
           f"{runs} trajectories of 50 rounds, max consumed/bound = {worst:.3f}", t0)


def rounds_to_fraction(accs, fraction=0.85):
    target = fraction * accs[-1]
    return next(t for t, a in enumerate(accs) if a >= target)


@pytest.mark.slow
def test_criterion_08_early_rounds_matter():
    t0 = time.perf_counter()
    medians = {}
    for pattern in ("descend", "uniform", "ascend"):
        hits = []
        for seed in SEEDS:
            cfg = desk(seed=seed, scheduler_kind="pattern", pattern=PatternConfig(name=pattern))
            hits.append(rounds_to_fraction([r.test_accuracy for r in run_experiment(cfg).records]))
        medians[pattern] = float(np.median(hits))
    passed = medians["descend"] <= medians["uniform"] <= medians["ascend"]
    report(8, "descend vs ascend cohort sizes", passed,
           "median rounds to 85% of final accuracy: "
           + ", ".join(f"{k}={v:g}" for k, v in medians.items()), t0)


@pytest.mark.slow
def test_criterion_09_knowledge_benefit():
    t0 = time.perf_counter()
    finals = {}
    for weight in (0.1, 0.0):
        accs = []
        for seed in SEEDS:
            cfg = desk(seed=seed, hp=HyperParams(knowledge_weight=weight))
            accs.append(run_experiment(cfg).records[-1].test_accuracy)
        finals[weight] = float(np.mean(accs))
    gain = finals[0.1] - finals[0.0]
    report(9, "knowledge aggregation benefit", gain >= 0.02,
           f"mean final accuracy lambda=0.1: {finals[0.1]:.4f}, lambda=0: {finals[0.0]:.4f}, "
           f"gain {100 * gain:+.2f} pp (needs >= +2 pp)", t0)


def test_criterion_10_determinism(tmp_path):
    t0 = time.perf_counter()
    paths = []
    for name in ("a", "b"):
        cfg = desk(seed=11, horizon=20, output_path=str(tmp_path / f"{name}.csv"))
        run_experiment(cfg)
        paths.append(tmp_path / f"{name}.csv")
    same = paths[0].read_bytes() == paths[1].read_bytes()
    report(10, "determinism", same, f"two runs, identical CSV bytes: {same}", t0)


def test_criterion_11_queue_evolution():
    t0 = time.perf_counter()
    cfg = desk(seed=3, horizon=50)
    res = run_experiment(cfg)
    profiles = build_population(cfg).profiles
    per_round = np.array([p.energy_budget for p in profiles]) / cfg.horizon
    q, e = res.queue_trace, res.energy_trace
    replay_ok = all(np.array_equal(q[t + 1], np.maximum(q[t] + e[t] - per_round, 0.0))
                    for t in range(cfg.horizon))
    step_ok = bool(np.all(e - per_round <= q[1:] - q[:-1] + 1e-15))
    telescope_ok = bool(np.all((e - per_round).sum(axis=0) <= q[-1] + 1e-12))
    report(11, "queue evolution", replay_ok and step_ok and telescope_ok,
           f"elementwise replay {replay_ok}, per-round increment bound {step_ok}, "
           f"telescoped bound {telescope_ok}", t0)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))
