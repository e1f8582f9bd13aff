"""Command-line front end.

Subcommands::

    sbl simulate  --config exp.json --out DIR      tag file + summary + manifest
    sbl correlate TAGFILE --out DIR                gN.csv + trace.csv
    sbl pmf       --model M --n-bar X --n-max N    pmf.csv (+ sidecar)
    sbl pmf       --tag TAGFILE                    empirical click pmf
    sbl zeta      PMF_A PMF_B --n-range 0..31      zeta.csv
    sbl fit       gN.csv                           fit.json
    sbl sweep     --config sweep.json --out DIR    sweep.csv + manifest

Exit codes: 0 success, 2 configuration or usage error, 3 unreadable or
corrupt file, 4 degenerate data. Failures print one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .correlator import (
    NORMALIZATIONS,
    accumulate,
    empirical_pmf,
    fit_log_linear,
    gN_from_moments,
    gn_table,
    read_gn_table,
    trace_from_moments,
    trace_table,
    zeta_ratio,
)
from .errors import ConfigError, CorruptFileError, DomainError, SBLError, UndefinedRatioError
from .simulator import ExperimentConfig, SweepResult, run, sweep
from .statmodels import normalize, read_pmf
from .statmodels.io import format_float, metadata, pmf_table
from .tagfile import read_tag, write_tag

DEFAULT_MAX_LAG = 10


@dataclass
class ReportBundle:
    """Named CSV tables plus a manifest tying them to the exact config."""

    tables: dict[str, str] = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    @staticmethod
    def make_manifest(config_json: str | None, seed: int | None, **extra) -> dict:
        m = {"tool": "sbl", "version": __version__, "seed": seed}
        if config_json is not None:
            m["config_sha256"] = hashlib.sha256(config_json.encode()).hexdigest()
            m["config"] = json.loads(config_json)
        m.update(extra)
        return m

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in self.tables.items():
            (out / f"{name}.csv").write_text(text, encoding="ascii", newline="\n")
        if self.manifest:
            (out / "manifest.json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n")
        return out


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# --- argument helpers -------------------------------------------------------

def parse_orders(text: str) -> list[int]:
    """``"2..5"`` or ``"2,3,5"``."""
    try:
        if ".." in text:
            lo, hi = text.split("..")
            orders = list(range(int(lo), int(hi) + 1))
        else:
            orders = [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse orders {text!r}")
    if not orders or min(orders) < 2:
        raise argparse.ArgumentTypeError("orders must be >= 2")
    return orders


def parse_range(text: str) -> range:
    try:
        lo, hi = text.split("..")
        return range(int(lo), int(hi) + 1)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO..HI, got {text!r}")


def _load_json(path) -> object:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CorruptFileError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig.from_dict(_load_json(path))
    return cfg if seed is None else cfg.with_seed(seed)


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def load_sweep(path, seed: int | None = None) -> list[ExperimentConfig]:
    """A list of configs, or ``{"base": {...}, "configs": [overrides, ...]}``."""
    doc = _load_json(path)
    if isinstance(doc, dict):
        base = doc.get("base", {})
        entries = [_merge(base, c) for c in doc.get("configs", [])]
    elif isinstance(doc, list):
        entries = doc
    else:
        raise ConfigError("sweep file must be a list or an object with 'configs'")
    cfgs = [ExperimentConfig.from_dict(e) for e in entries]
    return cfgs if seed is None else [c.with_seed(seed) for c in cfgs]


# --- commands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.seed)
    stream, summary = run(cfg, args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = "stream.csv" if args.format == "csv" else "stream.sbltag"
    write_tag(stream, out / name, args.format)
    (out / "summary.json").write_text(json.dumps(summary.to_dict(), indent=2) + "\n")
    ReportBundle(manifest=ReportBundle.make_manifest(cfg.to_json(), cfg.seed, stream=name)).write(out)
    for w in summary.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def cmd_correlate(args) -> int:
    stream = read_tag(args.tag)
    max_lag = min(DEFAULT_MAX_LAG, len(stream) - 1) if args.max_lag is None else args.max_lag
    if max_lag >= len(stream):
        raise DomainError(f"--max-lag {max_lag} must be smaller than the stream length {len(stream)}")
    acc = accumulate(stream, max_lag, args.threads)
    ests = [gN_from_moments(acc, o, args.normalization) for o in args.orders]
    tables = {"gN": gn_table(ests)}
    tables["trace"] = trace_table(trace_from_moments(acc, stream.pulse_period_ps, args.normalization))
    ReportBundle(tables).write(args.out)
    return 0


def cmd_pmf(args) -> int:
    if args.tag:
        dist = empirical_pmf(read_tag(args.tag))
    else:
        if args.model is None or args.n_bar is None:
            raise ConfigError("pmf needs --tag, or --model with --n-bar")
        dist = normalize(args.model, args.n_bar, args.n_max, args.policy)
    extra = {}
    if args.overlay:
        mean = dist.realized_mean
        if not mean > 0:
            raise DomainError("overlays need a positive mean")
        for tag in ("poisson", "bose_einstein"):
            extra[f"{tag}_log10_p"] = normalize(tag, mean, dist.n_max).weights
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "pmf.csv").write_text(pmf_table(dist, extra), encoding="ascii", newline="\n")
    (out / "pmf.json").write_text(json.dumps(metadata(dist), indent=2) + "\n")
    return 0


def zeta_table(pmf_a, pmf_b, n_range: range, i_tag="a", j_tag="b") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "log10_zeta"])
    for n in n_range:
        if n > pmf_a.n_max or n > pmf_b.n_max:
            raise DomainError(f"n={n} lies outside the support of one of the pmfs")
        try:
            z = zeta_ratio(pmf_a.log10_p(n), pmf_b.log10_p(n), n, i_tag, j_tag)
            w.writerow([n, format_float(z.log10_zeta)])
        except UndefinedRatioError:
            w.writerow([n, "undefined"])
    return buf.getvalue()


def cmd_zeta(args) -> int:
    a, b = read_pmf(args.pmf_a), read_pmf(args.pmf_b)
    n_range = args.n_range or range(0, min(a.n_max, b.n_max) + 1)
    ReportBundle({"zeta": zeta_table(a, b, n_range, Path(args.pmf_a).stem, Path(args.pmf_b).stem)}).write(args.out)
    return 0


def cmd_fit(args) -> int:
    try:
        text = Path(args.gn_csv).read_text()
    except OSError as exc:
        raise CorruptFileError(f"cannot read {args.gn_csv}: {exc}") from exc
    try:
        rows = read_gn_table(text)
    except (KeyError, ValueError) as exc:
        raise CorruptFileError(f"{args.gn_csv}: expected columns order,value,std_error,pulses") from exc
    intercept, slope = fit_log_linear([(r.order, r.value) for r in rows])
    result = {"slope": slope, "intercept": intercept, "prefactor": math.exp(intercept), "points": len(rows)}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "fit.json").write_text(json.dumps(result, indent=2) + "\n")
    return 0


def sweep_table(results: Sequence[SweepResult], orders: Sequence[int]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["index", "seed", "model", "n_bar", "transmittance", "background_n_bar", "pulses",
              "total_clicks", "mean_clicks", "mean_std_error"]
    for o in orders:
        header += [f"g{o}", f"g{o}_std_error"]
    w.writerow(header + ["error"])
    for i, r in enumerate(results):
        c = r.config
        row = [i, c.seed, c.source.model, format_float(c.source.n_bar), format_float(c.transmittance),
               format_float(c.background_n_bar)]
        if r.ok:
            s = r.summary
            row += [s.pulses, s.total_clicks, format_float(s.mean_clicks_per_pulse), format_float(r.mean.std_error)]
            for o in orders:
                try:
                    e = r.estimate(o)
                    row += [format_float(e.value), format_float(e.std_error)]
                except KeyError:
                    row += ["", ""]
            row.append("")
        else:
            row += [""] * (4 + 2 * len(orders)) + [f"{r.error.kind}: {r.error}"]
        w.writerow(row)
    return buf.getvalue()


def cmd_sweep(args) -> int:
    cfgs = load_sweep(args.config, args.seed)
    results = sweep(cfgs, args.orders, args.normalization, args.threads)
    configs_json = canonical_json([c.to_dict() for c in cfgs])
    manifest = ReportBundle.make_manifest(configs_json, args.seed, failed=sum(not r.ok for r in results))
    ReportBundle({"sweep": sweep_table(results, args.orders)}, manifest).write(args.out)
    for i, r in enumerate(results):
        if not r.ok:
            print(json.dumps({"run": i, "error": r.error.kind, "message": str(r.error)}), file=sys.stderr)
    return 0


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sbl", description="Super-bunching photon statistics toolkit")
    p.add_argument("--version", action="version", version=f"sbl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, threads=True):
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        if threads:
            sp.add_argument("--threads", type=int, default=None, help="worker threads (default: SBL_THREADS or 1)")

    sp = sub.add_parser("simulate", help="simulate a pulse train into a tag file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int, default=None, help="override the config seed")
    sp.add_argument("--format", choices=("binary", "csv"), default="binary")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("correlate", help="g^(N)(0) and g2(tau) from a tag file")
    sp.add_argument("tag")
    sp.add_argument("--orders", type=parse_orders, default=[2, 3, 4, 5])
    sp.add_argument("--max-lag", type=int, default=None, help=f"lags in pulse periods (default {DEFAULT_MAX_LAG})")
    sp.add_argument("--normalization", choices=NORMALIZATIONS, default="counts")
    common(sp)
    sp.set_defaults(func=cmd_correlate)

    sp = sub.add_parser("pmf", help="tabulate a model pmf or the click pmf of a tag file")
    sp.add_argument("--model", choices=("poisson", "bose_einstein", "bsv", "superbunching"))
    sp.add_argument("--n-bar", type=float)
    sp.add_argument("--n-max", type=int, default=200)
    sp.add_argument("--policy", choices=("complement", "renormalize"), default="complement")
    sp.add_argument("--tag", help="tag file; gives the empirical click pmf")
    sp.add_argument("--overlay", action="store_true", help="append Poisson and Bose-Einstein columns at the same mean")
    common(sp, threads=False)
    sp.set_defaults(func=cmd_pmf)

    sp = sub.add_parser("zeta", help="log10 ratio of two pmf tables")
    sp.add_argument("pmf_a")
    sp.add_argument("pmf_b")
    sp.add_argument("--n-range", type=parse_range, default=None)
    common(sp, threads=False)
    sp.set_defaults(func=cmd_zeta)

    sp = sub.add_parser("fit", help="exponential fit of g^(N)(0) against N")
    sp.add_argument("gn_csv")
    common(sp, threads=False)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("sweep", help="run several configs and tabulate estimates")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--orders", type=parse_orders, default=[2, 3, 4, 5])
    sp.add_argument("--normalization", choices=NORMALIZATIONS, default="counts")
    common(sp)
    sp.set_defaults(func=cmd_sweep)
    return p


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        return _fail(2, "config", "--threads must be >= 1")
    try:
        return args.func(args)
    except SBLError as exc:
        return _fail(exc.exit_code, exc.kind, str(exc))
    except OSError as exc:
        return _fail(3, "io", str(exc))


if __name__ == "__main__":
    sys.exit(main())
