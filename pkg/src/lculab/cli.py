"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 precondition violation
(including normalization underflow), 4 convergence failure.
"""

from __future__ import annotations

import argparse
import sys

from .analog import ConvergenceError
from .estimator import NormUnderflowError
from .harness import (
    EXIT_CONFIG,
    EXIT_CONVERGENCE,
    EXIT_OK,
    EXIT_PRECONDITION,
    ConfigError,
    parse_config,
    run_sweep,
    run_with_records,
    sweep_csv,
    trace_csv,
)

_GLOBAL_FLAGS = {
    "seed": dict(type=int, help="master seed"),
    "eps": dict(type=float, help="target accuracy"),
    "delta": dict(type=float, help="failure probability"),
    "mode": dict(choices=["shot", "expectation"], help="sampling mode"),
    "out": dict(type=str, help="write the JSON report here"),
    "config": dict(type=str, help="flat key=value config file"),
}

_SUB_FLAGS = {
    "hamsim": {
        "hamiltonian": dict(type=str, help="Pauli text, e.g. 0.3*X+0.4*Z"),
        "t": dict(type=float, help="evolution time"),
        "observable": dict(type=str, help="observable as Pauli text"),
        "state": dict(type=str, help="zero|plus|basis:<i>|amps:<...>"),
        "repetitions": dict(type=int, help="override the repetition count"),
    },
    "gsp": {
        "hamiltonian": dict(type=str), "observable": dict(type=str),
        "gap": dict(type=float, help="spectral gap lower bound"),
        "eta": dict(type=float, help="ground-state overlap lower bound"),
        "e0": dict(type=float, help="ground energy estimate"),
        "eg": dict(type=float, help="ground energy precision"),
        "state": dict(type=str), "repetitions": dict(type=int),
        "unitary_error": dict(type=float,
                              help="perturb every sampled unitary this much"),
    },
    "qls": {
        "hamiltonian": dict(type=str), "observable": dict(type=str),
        "kappa": dict(type=float, help="condition number"),
        "b_state": dict(type=str), "repetitions": dict(type=int),
    },
    "analog-gsp": {
        "hamiltonian": dict(type=str), "gap": dict(type=float),
        "eta": dict(type=float), "e0": dict(type=float),
        "eg": dict(type=float), "state": dict(type=str),
    },
    "analog-qls": {
        "hamiltonian": dict(type=str), "kappa": dict(type=float),
        "b_state": dict(type=str),
        "ancilla": dict(choices=["ring", "gaussian"]),
    },
    "walks-search": {
        "graph": dict(type=str, help="cycle:N|complete:N|file:<edgelist>"),
        "marked": dict(type=str, help="comma-separated node ids"),
        "algo": dict(type=int, choices=[1, 2]),
        "trials": dict(type=int), "c_t": dict(type=float),
    },
    "decomp-check": {
        "kind": dict(choices=["gaussian", "inverse"]),
        "t": dict(type=float), "gamma": dict(type=float),
        "kappa": dict(type=float),
        "hamiltonian": dict(type=str,
                            help="optional: also check the dense operator"),
    },
    "sweep": {
        "base": dict(type=str, help="subcommand to sweep"),
        "axis": dict(type=str, help="parameter to vary"),
        "values": dict(type=str, help="comma-separated axis values"),
    },
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lculab")
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for name, flags in _SUB_FLAGS.items():
        sp = subs.add_parser(name)
        for flag, kw in _GLOBAL_FLAGS.items():
            sp.add_argument(f"--{flag}", default=None, **kw)
        sp.add_argument("--trace", action="store_true", default=None,
                        help="emit a per-sample CSV next to the report")
        for flag, kw in flags.items():
            sp.add_argument(f"--{flag.replace('_', '-')}",
                            dest=flag, default=None, **kw)
        # sweep also carries the base subcommand's parameters
        if name == "sweep":
            seen = {"base", "axis", "values"}
            for base_flags in _SUB_FLAGS.values():
                for flag, kw in base_flags.items():
                    if flag in seen:
                        continue
                    seen.add(flag)
                    sp.add_argument(f"--{flag.replace('_', '-')}",
                                    dest=flag, default=None, **kw)
    return parser


def _check_duplicate_flags(argv: list[str]) -> None:
    seen = set()
    for token in argv:
        if not token.startswith("--"):
            continue
        name = token.split("=", 1)[0]
        if name in seen:
            raise ConfigError(f"duplicate flag {name}")
        seen.add(name)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _check_duplicate_flags(argv)
        try:
            ns = parser.parse_args(argv)
        except SystemExit as ex:
            # argparse exits 2 on bad flags, matching our config-error code;
            # --help exits 0
            return int(ex.code) if ex.code else EXIT_OK
        flag_params = {k: v for k, v in vars(ns).items()
                       if k not in ("subcommand",) and v is not None}
        config_file = flag_params.pop("config", None)
        config = parse_config(ns.subcommand, flag_params, config_file)
    except ConfigError as ex:
        print(f"config error: {ex}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if config.subcommand == "sweep":
            rows = run_sweep(config)
            text = sweep_csv(rows)
            _emit(text, config.params.get("out"))
            return EXIT_OK
        report, records = run_with_records(config)
        _emit(report.to_json() + "\n", config.params.get("out"))
        out = config.params.get("out")
        if config.params.get("trace") and out:
            with open(out + ".trace.csv", "w") as fh:
                fh.write(trace_csv(records))
        return EXIT_OK
    except ConfigError as ex:
        print(f"config error: {ex}", file=sys.stderr)
        return EXIT_CONFIG
    except NormUnderflowError as ex:
        print(f"precondition violation: {ex}", file=sys.stderr)
        return EXIT_PRECONDITION
    except ConvergenceError as ex:
        print(f"convergence failure: {ex}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ValueError as ex:
        print(f"precondition violation: {ex}", file=sys.stderr)
        return EXIT_PRECONDITION


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    sys.exit(main())
