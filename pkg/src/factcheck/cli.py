"""Command-line entry point: ``factcheck <subcommand> [flags]``.

Exit codes: 0 ok, 2 configuration error, 3 failed check, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, parse_float_list, read_config_file

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_IO = 0, 2, 3, 4

# flag dest -> config key
_SHARED = ("n", "pi", "seed", "horizon", "schedule", "trunc_c", "trunc_gamma", "mode", "out", "cadence")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _shared_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--n", type=int)
    p.add_argument("--pi", help="comma-separated unreliabilities")
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--schedule", help="harmonic, harmonic:<offset> or power:<p>[:<scale>]")
    p.add_argument("--trunc-c", type=float)
    p.add_argument("--trunc-gamma", type=float)
    p.add_argument("--mode", choices=("truncated", "plain"))
    p.add_argument("--out", help="output directory")
    p.add_argument("--cadence", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="factcheck", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="dump a simulated stream to stream.csv")
    _shared_flags(p)
    p = sub.add_parser("estimate", help="run the estimator and write trajectory, resets and summary")
    _shared_flags(p)
    p = sub.add_parser("odeflow", help="integrate the mean-field ODE and write flow.csv")
    _shared_flags(p)
    p.add_argument("--x0", help="start point; defaults to the configured P(0)")
    p.add_argument("--duration", type=float, default=500.0)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--record-every", type=int, default=20)
    p = sub.add_parser("equilibria", help="multistart equilibrium census plus V reports")
    _shared_flags(p)
    p.add_argument("--starts", type=int, default=200)
    p = sub.add_parser("verify", help="run the certificate sweep")
    _shared_flags(p)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--draws", type=int, default=100_000)
    p = sub.add_parser("decode", help="exact error of a linear-threshold decoder")
    _shared_flags(p)
    p.add_argument("--alpha", help="weights; defaults to the log-odds of pi")
    p.add_argument("--tau", type=float, default=0.0)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    mapping: dict[str, str] = {}
    if args.config:
        try:
            mapping.update(read_config_file(args.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc.strerror or exc}") from exc
    for key in _SHARED:
        value = getattr(args, key, None)
        if value is not None:
            mapping[key] = str(value)
    if "pi" not in mapping:
        if "n" in mapping:
            # n alone: evenly spread reliable agents in (0, 1/2)
            n = int(mapping["n"])
            if n < 1:
                raise ConfigError(f"n must be >= 1, got {n}")
            mapping["pi"] = ",".join(repr(0.05 + 0.4 * i / max(n - 1, 1)) for i in range(n))
        else:
            mapping["pi"] = ",".join(repr(p) for p in ExperimentConfig().pi)
    return ExperimentConfig.from_mapping(mapping)


def _out_dir(config: ExperimentConfig) -> Path:
    out = Path(config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    return out


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _cmd_simulate(config, args) -> int:
    from .harness import simulate_stream

    stream = simulate_stream(config.pi, config.horizon, config.seed)
    header = "t,s," + ",".join(f"r_{i}" for i in range(1, config.n + 1))
    lines = [header]
    for k in range(len(stream)):
        row = stream.verdicts[k].tolist()
        lines.append(f"{k + 1},{int(stream.labels[k])}," + ",".join(str(v) for v in row))
    path = _out_dir(config) / "stream.csv"
    _write(path, "\n".join(lines) + "\n")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_estimate(config, args) -> int:
    from .harness import run_experiment

    summary = run_experiment(config)
    print(json.dumps({k: summary[k] for k in ("final_P", "census_distance", "reset_count", "last_reset_time")}))
    return EXIT_OK


def _cmd_odeflow(config, args) -> int:
    from .meanfield import census_distance, ode_flow

    x0 = parse_float_list(args.x0) if args.x0 else config.resolved_init
    if len(x0) != config.n:
        raise ConfigError(f"--x0 has {len(x0)} entries, expected {config.n}")
    flow = ode_flow(x0, config.pi, args.duration, args.step, record_every=args.record_every)
    path = _out_dir(config) / "flow.csv"
    _write(path, flow.to_csv())
    end = flow.endpoint
    print(json.dumps({"endpoint": end.tolist(), "census_distance": census_distance(end, config.pi)}))
    return EXIT_OK


def _cmd_equilibria(config, args) -> int:
    from .lyapunov import lyapunov_report
    from .meanfield import find_equilibria

    eq = find_equilibria(config.pi, multistart=args.starts, seed=config.seed)
    out = _out_dir(config)
    _write(out / "equilibria.json", eq.to_json())
    reports = [json.loads(lyapunov_report(x, config.pi).to_json()) for x in eq.census()]
    _write(out / "lyapunov.json", json.dumps(reports, indent=2) + "\n")
    for x in eq.interior_points:
        print("interior", np.round(x, 9).tolist())
    print(f"boundary points: {len(eq.boundary)}")
    return EXIT_OK


def _cmd_verify(config, args) -> int:
    from .harness import VerifyReport, verify_suite

    report = verify_suite(config, samples=args.samples, draws=args.draws)
    out = _out_dir(config)
    _write(out / "verify.json", report.to_json())
    _write(out / "verify_sweep.csv", VerifyReport.SWEEP_HEADER + "\n" + report.sweep_row() + "\n")
    for line in report.lines():
        print(line)
    if not report.passed:
        print("failed checks: " + ", ".join(report.failed), file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def _cmd_decode(config, args) -> int:
    from .harness import decoder_error_exact, optimal_weights

    alpha = parse_float_list(args.alpha) if args.alpha else tuple(optimal_weights(config.pi))
    if len(alpha) != config.n:
        raise ConfigError(f"--alpha has {len(alpha)} entries, expected {config.n}")
    err = decoder_error_exact(config.pi, alpha, args.tau)
    print(json.dumps({"alpha": list(alpha), "tau": args.tau, "error": err}))
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "odeflow": _cmd_odeflow,
    "equilibria": _cmd_equilibria,
    "verify": _cmd_verify,
    "decode": _cmd_decode,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        return _COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
