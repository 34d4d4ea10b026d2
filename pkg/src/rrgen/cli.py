"""Command-line front end.

Subcommands: ``simulate``, ``identify``, ``detect``, ``sweep``, ``fx``. Each
accepts ``--config <json>`` (a flat parameter map), ``--seed`` and ``--out``;
explicit flags override the config file.

Exit codes: 0 success, 2 usage error / missing file / missing seed,
3 invalid or insufficient data, 4 invalid configuration.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import baseline, fixedpoint
from .numerics import InsufficientExcitationError, NotPositiveDefiniteError, RngStream
from .residual import DetectorConfig, RobustDetector, write_trace
from .sysid import GramInverse, InnovationModel, IoRecord, MarkovEstimate, RecordError, identify, \
    innovation_covariance

SCHEMA_VERSION = 1

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CONFIG = 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON parameter file")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rrgen", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command")
    parser.subcommands = sub.choices

    p = sub.add_parser("simulate", help="write a seeded I/O record as CSV")
    _common(p)
    p.add_argument("--model", choices=["static", "predictor"])
    p.add_argument("--n", type=int, help="number of samples")
    p.add_argument("--no-fault", action="store_true")

    p = sub.add_parser("identify", help="estimate Markov parameters from a CSV record")
    _common(p)
    p.add_argument("--data", type=Path)
    p.add_argument("--p", type=int, help="past horizon")

    p = sub.add_parser("detect", help="run the robust detector over a CSV record")
    _common(p)
    p.add_argument("--data", type=Path)
    p.add_argument("--markov", type=Path)
    p.add_argument("--gram", type=Path)
    p.add_argument("--L", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--sigma-e", type=float, dest="sigma_e",
                   help="innovation standard deviation (scalar, applied as sigma^2 I)")

    p = sub.add_parser("sweep", help="false-alarm-rate and SNR studies of the static-gain detector")
    _common(p)
    p.add_argument("--L-list", dest="L_list", type=_ints)
    p.add_argument("--snr-list", dest="snr_list", type=_floats)
    p.add_argument("--trials", type=int)
    p.add_argument("--snr-trials", dest="snr_trials", type=int)
    p.add_argument("--alpha", type=float)

    p = sub.add_parser("fx", help="fixed-point range collection, format proposal and execution")
    _common(p)
    p.add_argument("--formats", type=Path, help="formats.json; skips the range pass")
    p.add_argument("--frac", type=int, help="target fraction length (default 6)")
    p.add_argument("--L", type=int)
    p.add_argument("--dhat", type=float)
    p.add_argument("--no-fault", action="store_true")
    return parser


def load_config(args) -> dict:
    cfg = {}
    if args.config is not None:
        if not args.config.is_file():
            raise CliError(f"config file not found: {args.config}", EXIT_USAGE)
        try:
            cfg = json.loads(args.config.read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"{args.config}: invalid JSON ({exc})", EXIT_CONFIG) from exc
        if not isinstance(cfg, dict):
            raise CliError(f"{args.config}: expected a JSON object", EXIT_CONFIG)
    for key, value in vars(args).items():
        if key in ("config", "command", "out") or value is None or value is False:
            continue
        cfg[key] = value
    return cfg


def _require_seed(cfg: dict) -> int:
    if "seed" not in cfg:
        raise CliError("a seed is required (--seed or \"seed\" in the config)", EXIT_USAGE)
    return int(cfg["seed"])


def _require_file(path) -> Path:
    if path is None:
        raise CliError("missing required input file argument", EXIT_USAGE)
    path = Path(path)
    if not path.is_file():
        raise CliError(f"file not found: {path}", EXIT_USAGE)
    return path


def baseline_config(cfg: dict, **overrides) -> baseline.BaselineConfig:
    keys = ("d", "sigma_e", "u_level", "n_id", "L", "alpha", "run_length", "snr_db", "dhat", "stride")
    kwargs = {k: cfg[k] for k in keys if k in cfg}
    if "fault" in cfg:
        f = cfg["fault"]
        kwargs["fault"] = None if f is None else baseline.Fault(**f)
    if cfg.get("no_fault"):
        kwargs["fault"] = None
    kwargs.update(overrides)
    try:
        return baseline.BaselineConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid configuration: {exc}", EXIT_CONFIG) from exc


def _write_json(path: Path, doc: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION, **doc}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_simulate(cfg: dict, out: Path) -> list[Path]:
    seed = _require_seed(cfg)
    model = cfg.get("model", "static")
    rng = RngStream(seed)
    if model == "static":
        bcfg = baseline_config(cfg, seed=seed, **({"run_length": cfg["n"]} if "n" in cfg else {}))
        rec = baseline.simulate(bcfg, rng)
    else:
        pm = cfg.get("predictor", {})
        try:
            plant = InnovationModel.from_predictor(
                pm.get("phi", 0.5), pm.get("b_tilde", 1.0), pm.get("k", 0.3),
                pm.get("c", 1.0), pm.get("d", 0.5), pm.get("sigma_e", 1.0))
        except ValueError as exc:
            raise CliError(f"invalid predictor model: {exc}", EXIT_CONFIG) from exc
        n = int(cfg.get("n", 1000))
        u = rng.child(0).standard_normal(n * plant.B.shape[1]).reshape(n, -1)
        faults = None
        if "fault" in cfg and cfg["fault"] is not None and not cfg.get("no_fault"):
            f = cfg["fault"]
            faults = np.zeros((n, plant.C.shape[0]))
            faults[f["start"]:f["end"]] = f["height"]
        rec, _ = plant.simulate(u, rng.child(1), faults=faults)
    path = out / "data.csv"
    rec.to_csv(path)
    return [path]


def cmd_identify(cfg: dict, out: Path) -> list[Path]:
    data = _require_file(cfg.get("data"))
    p = int(cfg.get("p", 1))
    rec = IoRecord.from_csv(data)
    est, gram = identify(rec, p)
    sigma_e = innovation_covariance(rec, est)
    m_path, g_path = out / "markov.json", out / "gram.json"
    _write_json(m_path, {**est.to_dict(), "sigma_e_estimate": sigma_e.tolist()})
    _write_json(g_path, gram.to_dict())
    return [m_path, g_path]


def cmd_detect(cfg: dict, out: Path) -> list[Path]:
    data = _require_file(cfg.get("data"))
    m_path = _require_file(cfg.get("markov"))
    g_path = _require_file(cfg.get("gram", Path(m_path).with_name("gram.json")))
    mdoc = json.loads(m_path.read_text())
    est = MarkovEstimate.from_dict(mdoc)
    gram = GramInverse.from_dict(json.loads(g_path.read_text()))
    if "sigma_e" in cfg:
        s = cfg["sigma_e"]
        sigma = np.atleast_2d(np.array(s, dtype=float))
        sigma = sigma**2 * np.eye(est.l) if sigma.size == 1 else sigma
    else:
        sigma = np.array(mdoc["sigma_e_estimate"], dtype=float)
    try:
        dcfg = DetectorConfig(int(cfg.get("L", 20)), est.p, float(cfg.get("alpha", 0.005)),
                              est.m, est.l, sigma)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise CliError(f"invalid detector configuration: {exc}", EXIT_CONFIG) from exc
    rec = IoRecord.from_csv(data)
    if (rec.m, rec.l) != (est.m, est.l):
        raise CliError(f"{data}: record dims (m={rec.m}, l={rec.l}) do not match markov.json", EXIT_DATA)
    try:
        rows = RobustDetector(est, gram, dcfg).run(rec)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_DATA) from exc
    path = out / "trace.csv"
    write_trace(rows, path)
    return [path]


def cmd_sweep(cfg: dict, out: Path) -> list[Path]:
    seed = _require_seed(cfg)
    L_list = cfg.get("L_list", [5, 10, 20, 40])
    snr_list = cfg.get("snr_list", [-20.0, 0.0, 20.0])
    if not L_list or not snr_list:
        raise CliError("sweep grid is empty", EXIT_CONFIG)
    trials = int(cfg.get("trials", 50))
    snr_trials = int(cfg.get("snr_trials", 200))
    base = baseline_config(cfg, seed=seed, fault=None)
    result = baseline.far_sweep(L_list, snr_list, trials, float(cfg.get("alpha", base.alpha)), base)
    far_path, snr_path = out / "far_sweep.csv", out / "snr_table.csv"
    result.to_csv(far_path)
    baseline.write_snr_table(baseline.snr_error_table(snr_list, snr_trials, base), snr_path)
    return [far_path, snr_path]


def cmd_fx(cfg: dict, out: Path) -> list[Path]:
    seed = _require_seed(cfg)
    defaults = {"L": 10, "dhat": 2.04}
    bcfg = baseline_config({**defaults, **cfg}, seed=seed)
    frac = int(cfg.get("frac", 6))
    written = []
    float_trace, _ = fixedpoint.collect_ranges(bcfg)
    trace_path = out / "trace.csv"
    ref = baseline.run_trace(bcfg)
    ref.to_csv(trace_path)
    written.append(trace_path)
    if "formats" in cfg:
        try:
            formats, _ = fixedpoint.read_formats_json(_require_file(cfg["formats"]))
        except (KeyError, ValueError) as exc:
            raise CliError(f"{cfg['formats']}: invalid formats file ({exc})", EXIT_CONFIG) from exc
    else:
        formats = fixedpoint.propose_formats(float_trace.ranges, frac)
        ranges_path, formats_path = out / "ranges.csv", out / "formats.json"
        fixedpoint.write_ranges_csv(float_trace.ranges, formats, ranges_path)
        fixedpoint.write_formats_json(formats, formats_path, SCHEMA_VERSION)
        written += [ranges_path, formats_path]
        cmp_path = out / "reference_comparison.json"
        rows = fixedpoint.compare_with_reference(formats)
        _write_json(cmp_path, {"rows": [
            {**r, "proposed": str(r["proposed"]), "reference": str(r["reference"])} for r in rows]})
        written.append(cmp_path)
    try:
        fx = fixedpoint.fx_run_detector(bcfg, formats)
    except KeyError as exc:
        raise CliError(str(exc.args[0]), EXIT_CONFIG) from exc
    fx_path, ops_path = out / "fx_trace.csv", out / "op_count.json"
    fx.to_csv(fx_path, reference_tau=ref.tau)
    _write_json(ops_path, {**fixedpoint.op_count_report(fx, bcfg.L),
                           "saturations": dict(sorted(fx.saturations.items()))})
    return written + [fx_path, ops_path]


COMMANDS = {
    "simulate": cmd_simulate,
    "identify": cmd_identify,
    "detect": cmd_detect,
    "sweep": cmd_sweep,
    "fx": cmd_fx,
}


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if len(argv) == 1:
        # bare subcommand: show its usage rather than guessing inputs
        parser.subcommands[args.command].print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args)
        args.out.mkdir(parents=True, exist_ok=True)
        for path in COMMANDS[args.command](cfg, args.out):
            print(path)
    except CliError as exc:
        print(f"rrgen {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except (RecordError, InsufficientExcitationError, NotPositiveDefiniteError) as exc:
        print(f"rrgen {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
