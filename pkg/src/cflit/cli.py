"""Command-line interface.

Exit codes: 0 success, 2 usage or configuration error, 3 FL demand exceeds
the available resource blocks, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

from . import _rng
from .allocation import AllocationBudget
from .config import ExperimentConfig, load_config
from .errors import (
    ConvergenceError,
    DegenerateChannelError,
    DomainError,
    InfeasibleError,
    InvalidConfigError,
    InvalidInputError,
    NumericalError,
    TruncatedStreamError,
)
from .experiments import REGISTRY, reproduce_experiment
from .hyperopt import optimal_T, zeta
from .io import write_manifest, write_table
from .learning.data import SyntheticDataset
from .rates import (
    analytic_rate_rsca,
    analytic_rate_threshold,
    optimal_threshold_qstar,
    rate_improvement,
)
from .channel import BlockFadingField, quantile_threshold
from .rates import average_sum_rate
from .simulation import (
    allocate,
    it_channel_gains,
    learning_setup,
    plan_run,
    run_cflit,
    theta_of,
    trial_seeds,
)

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _global_options(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", metavar="PATH", default=d, help="INI configuration file")
    p.add_argument("--seed", type=_u64, default=d, help="base seed")
    p.add_argument("--trials", type=_positive, default=d, help="Monte Carlo trials")
    p.add_argument("--out", metavar="DIR", default=d, help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS if suppress else "csv",
                   help="table format (default csv)")
    p.add_argument("--preset", choices=("paper", "desk"), default=d,
                   help="built-in configuration when no --config is given")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=d,
                   help="override a config value, e.g. system.n_symbols=1500")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cflit", description=__doc__.splitlines()[0])
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_options(p, suppress=True)
        return p

    p = add("hyperopt", "optimal local steps, rounds and the zeta table")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tau-max", type=_positive, default=20)
    p.add_argument("--constants", choices=("paper", "estimated"))

    p = add("allocate", "allocate resource blocks and export the grid")
    p.add_argument("--scheme", choices=("online", "offline", "rsca"))
    p.add_argument("--tau", type=_positive)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--dump-channels", metavar="PATH", help="write the IT channel grid as binary")

    p = add("rates", "closed-form expected IT rates")
    p.add_argument("--n", type=_positive, help="number of IT devices")
    p.add_argument("--theta", type=float, help="effective SNR scale")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--q", type=float, help="threshold (default q*)")
    g.add_argument("--p-it", type=float, help="IT share; q is its quantile threshold")

    p = add("simulate", "end-to-end CFLIT trials")
    p.add_argument("--scheme", choices=("online", "offline", "rsca"))
    p.add_argument("--tau", type=_positive)
    p.add_argument("--allow-truncation", action="store_true",
                   help="train on all RBs when FL demand cannot be met")
    p.add_argument("--save-dataset", metavar="PATH")
    p.add_argument("--load-dataset", metavar="PATH")

    p = add("reproduce", "run a registered figure / table experiment")
    p.add_argument("name", help="one of: " + ", ".join(sorted(REGISTRY)))
    p.add_argument("--param", metavar="KEY=VALUE", action="append", default=[],
                   help="experiment parameter, e.g. taus=1,6,20 or rounds=300")
    return parser


def _pairs(items, what) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise InvalidConfigError(f"{what} {item!r} is not KEY=VALUE")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _config(args) -> ExperimentConfig:
    # a config file wins over --preset
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    elif getattr(args, "preset", None):
        cfg = ExperimentConfig.preset_named(args.preset)
    else:
        cfg = ExperimentConfig.paper()
    upd = _pairs(getattr(args, "set", None), "--set")
    if args.seed is not None:
        upd["seed"] = args.seed
    if args.trials is not None:
        upd["trials"] = args.trials
    for name in ("epsilon",):
        if getattr(args, name, None) is not None:
            upd[f"learning.{name}"] = getattr(args, name)
    if getattr(args, "constants", None):
        upd["learning.constants"] = args.constants
    if getattr(args, "scheme", None):
        upd["allocation.scheme"] = args.scheme
    return cfg.with_values(**upd)


def _emit(args, obj) -> None:
    if args.format == "json":
        print(json.dumps(obj, indent=1, default=str))
    else:
        for k, v in obj.items():
            if not isinstance(v, (list, dict)):
                print(f"{k}={v}")


# ---------------------------------------------------------------- commands

def cmd_hyperopt(args) -> int:
    cfg = _config(args)
    setup = learning_setup(cfg)
    plan = plan_run(cfg, setup.bound)
    eps = cfg.learning.epsilon
    rows = [(t, float(zeta(t, setup.bound)), optimal_T(t, eps, setup.bound))
            for t in range(1, args.tau_max + 1)]
    b = setup.bound
    _emit(args, {"tau_star": plan.tau, "T_star": plan.n_rounds, "epsilon": eps,
                 "mu": b.mu, "L": b.lipschitz, "Gamma": b.hetero, "channel_term": b.channel_term,
                 "zeta": [dict(tau=t, zeta=z, T=T) for t, z, T in rows]})
    if args.format == "csv":
        print("tau,zeta,T")
        for t, z, T in rows:
            print(f"{t},{z!r},{T}")
    if args.out:
        write_table(Path(args.out) / "hyperopt", ("tau", "zeta", "T"), rows, args.format)
    return EXIT_OK


def cmd_allocate(args) -> int:
    cfg = _config(args)
    setup = learning_setup(cfg)
    plan = plan_run(cfg, setup.bound, args.tau)
    if not plan.feasible:
        raise plan.infeasible_error()
    s = cfg.system
    gains = it_channel_gains(cfg, cfg.seed)
    grid = allocate(cfg.allocation.scheme, gains, plan.demand, cfg.seed)
    budget = AllocationBudget(s.n_subcarriers, s.n_symbols, plan.demand, s.n_it_devices)
    rate = average_sum_rate(grid, gains, theta_of(cfg))
    summary = grid.summary(budget)
    summary.update(scheme=cfg.allocation.scheme, tau=plan.tau, rounds=plan.n_rounds,
                   rate_bits_per_rb=rate)
    _emit(args, summary)
    if args.out:
        grid.save(Path(args.out) / "allocation", budget)
    if args.dump_channels:
        BlockFadingField(s.n_it_devices, s.n_subcarriers, s.n_symbols, cfg.seed,
                         s.coherence_block_len, _rng.IT_CHANNEL, s.channel_profile,
                         s.n_taps).materialize().dump(args.dump_channels)
    return EXIT_OK


def cmd_rates(args) -> int:
    cfg = _config(args)
    n = args.n or cfg.system.n_it_devices
    theta = args.theta if args.theta is not None else theta_of(cfg)
    qstar = optimal_threshold_qstar(n, theta)
    if args.p_it is not None:
        q = quantile_threshold(args.p_it, n)
    else:
        q = qstar if args.q is None else args.q
    _emit(args, {"n": n, "theta": theta, "q": q,
                 "rate_threshold": analytic_rate_threshold(n, theta, q),
                 "rate_rsca": analytic_rate_rsca(n, theta, q),
                 "rate_improvement": rate_improvement(n, theta, q),
                 "q_star": qstar})
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    dataset = SyntheticDataset.load(args.load_dataset) if args.load_dataset else None
    setup = learning_setup(cfg, dataset=dataset)
    if args.save_dataset:
        setup.dataset.save(args.save_dataset)
    out = Path(args.out) if args.out else None
    timings, summaries = [], []
    for i, sd in enumerate(trial_seeds(cfg)):
        start = time.perf_counter()
        tr = run_cflit(cfg, sd, tau=args.tau, setup=setup, allow_truncation=args.allow_truncation)
        timings.append(time.perf_counter() - start)
        meta = tr.metadata()
        meta["trial"] = i
        meta["final_gap_avg"] = tr.final_gap
        summaries.append(meta)
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            body = tr.to_csv() if args.format == "csv" else tr.to_json()
            (out / f"transcript_trial{i}.{args.format}").write_text(body)
        _emit(args, meta)
    if out is not None:
        write_manifest(out / "simulate_manifest.json", command="simulate", config=cfg.to_dict(),
                       seeds=trial_seeds(cfg), trials=summaries,
                       timings={"per_trial_s": timings, "total_s": sum(timings)})
    return EXIT_OK


def cmd_reproduce(args) -> int:
    cfg = _config(args)
    if args.name not in REGISTRY:
        print(f"cflit: unknown experiment {args.name!r}; available: "
              f"{', '.join(sorted(REGISTRY))}", file=sys.stderr)
        return EXIT_USAGE
    res = reproduce_experiment(args.name, cfg, args.out, params=_pairs(args.param, "--param"),
                               fmt=args.format)
    for table, (header, rows) in res.tables.items():
        if table.endswith("_final") or table == args.name:
            print(f"# {table}")
            print(",".join(header))
            for r in rows:
                print(",".join(_fmt(v) for v in r))
    return EXIT_OK


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


COMMANDS = {
    "hyperopt": cmd_hyperopt,
    "allocate": cmd_allocate,
    "rates": cmd_rates,
    "simulate": cmd_simulate,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InfeasibleError as exc:
        print(f"cflit: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConvergenceError, NumericalError, DomainError, DegenerateChannelError,
            FloatingPointError) as exc:
        print(f"cflit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidConfigError, InvalidInputError, TruncatedStreamError) as exc:
        print(f"cflit: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
