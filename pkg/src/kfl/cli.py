"""Command line entry point: ``kfl run | allocate | verify``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .allocation import allocate_bandwidth
from .harness.config import ChannelConfig, ConfigError, build_section, load_config
from .harness.metrics import format_metrics
from .harness.runner import RoundError, run_experiment
from .system_model import ChannelModel, DeviceProfile, PayloadSpec, channel_gain

EXIT_FAILED_CHECK = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_path"] = str(args.out)
    cfg = cfg.replace(**changes)
    result = run_experiment(cfg)
    if cfg.output_path is None:
        sys.stdout.write(format_metrics(result.records))
    last = result.records[-1]
    print(f"rounds={len(result.records)} final_accuracy={last.test_accuracy:.4f} "
          f"max_cum_energy={last.per_device_cumulative_energy.max():.6g} J"
          + (f" metrics={cfg.output_path}" if cfg.output_path else ""), file=sys.stderr)
    return 0


def load_instance(path: str | Path):
    """Read an allocation instance: deadline, local_iters, payload, channel and a device list."""
    try:
        raw = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        ch = build_section(ChannelConfig, raw.get("channel"), "channel")
        model = ChannelModel(ch.path_loss_const, ch.ref_distance, ch.path_loss_exp,
                             ch.noise_psd, ch.bandwidth_total)
        pay = raw.get("payload", {})
        payload = PayloadSpec.for_knowledge(int(pay.get("num_classes", 10)),
                                            int(pay.get("feature_dim", 64)),
                                            int(pay.get("bits_per_param", 32)))
        profiles, gains, queues = [], [], []
        for i, dev in enumerate(raw["devices"]):
            prof = DeviceProfile(
                id=i, samples_per_class=[int(dev["samples"])], cpu_freq=float(dev["cpu_freq"]),
                flops_per_sample=float(dev["flops_per_sample"]),
                max_power=float(dev.get("max_power", 1.0)), energy_budget=1.0,
                distance=float(dev.get("distance", 1.0)),
                flops_per_cycle=float(dev.get("flops_per_cycle", 1.0)),
                power_coeff=float(dev.get("power_coeff", 1e-28)))
            gain = dev.get("gain")
            gains.append(float(gain) if gain is not None else
                         channel_gain(model, prof.distance, float(dev.get("fading", 1.0))))
            queues.append(float(dev.get("queue", 1.0)))
            profiles.append(prof)
        deadline = float(raw.get("deadline", 1.0))
        local_iters = int(raw.get("local_iters", 5))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: bad instance ({type(exc).__name__}: {exc})") from exc
    if not profiles:
        raise ConfigError(f"{path}: devices: at least one device is required")
    return profiles, gains, queues, deadline, payload, model, local_iters


def _cmd_allocate(args) -> int:
    profiles, gains, queues, deadline, payload, model, iters = load_instance(args.config)
    res = allocate_bandwidth(profiles, queues, gains, deadline, payload, model, iters)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        if not res.feasible:
            print("infeasible: the minimum shares do not fit in the band", file=out)
            return EXIT_FAILED_CHECK
        print(f"{'device':>6} {'queue':>10} {'theta':>12} {'power_W':>12} {'energy_J':>12}", file=out)
        for p, q in zip(profiles, queues):
            print(f"{p.id:>6d} {q:>10.4g} {res.shares[p.id]:>12.6g} {res.powers[p.id]:>12.6g} "
                  f"{res.energies[p.id]:>12.6g}", file=out)
        print(f"sum_theta={sum(res.shares.values()):.9f} mu={res.multiplier:.6g} "
              f"weighted_energy={res.weighted_energy(dict(zip([p.id for p in profiles], queues))):.6g}",
              file=out)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _cmd_verify(args) -> int:
    from .verify import run_all

    results = run_all(quick=not args.full)
    lines = [r.line() for r in results]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0 if all(r.passed for r in results) else EXIT_FAILED_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kfl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a full experiment from a YAML config")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--out", type=Path, help="metrics CSV path (default: config output_path or stdout)")
    run.set_defaults(func=_cmd_run)

    alloc = sub.add_parser("allocate", help="one-shot bandwidth/power allocation for an instance file")
    alloc.add_argument("--config", required=True, type=Path)
    alloc.add_argument("--seed", type=int, help="accepted for symmetry; allocation is deterministic")
    alloc.add_argument("--out", type=Path)
    alloc.set_defaults(func=_cmd_allocate)

    ver = sub.add_parser("verify", help="run the oracle checks")
    ver.add_argument("--full", action="store_true", help="full-size checks instead of the quick subset")
    ver.add_argument("--config", type=Path, help="unused; accepted for symmetry")
    ver.add_argument("--seed", type=int, help="unused; the checks use fixed seeds")
    ver.add_argument("--out", type=Path, help="also write the report here")
    ver.set_defaults(func=_cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RoundError as exc:
        print(f"RoundError: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report the class, exit nonzero
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
