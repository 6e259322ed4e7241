"""
Command-line entry point: ``photonstat {analytic,simulate,correlate,figure,verify}``.

Every run writes its outputs plus ``manifest.json`` into ``--out-dir``.  The
manifest records the subcommand, the full parameter set, seed, package
version, output files with SHA-256 digests and the wall-clock duration;
re-running with the recorded parameters reproduces the data files
byte for byte.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 I/O or
format error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .analytic import ThermalParams, g_m0, g_mn, reference_g2
from .coherence import CoherenceModel, mu_at
from .correlate import (
    DEFAULT_BACKGROUND,
    GmnCurve,
    correlate_ptag,
    estimate_gmn,
    peak_background_normalize,
    spatial_scans,
)
from .errors import FormatError, PrecisionWarning, UndefinedCorrelationError
from .formats import MAGIC, read_counts_csv, write_counts_csv, write_json, write_rows
from .simulate import SimConfig, simulate, simulate_to_ptag

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

FIGURES = ("2", "3", "4a1", "4a2", "4b1", "4b2", "6", "7", "8a", "8b")


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    subcommand: str
    parameters: dict
    seed: int
    version: str = __version__
    outputs: List[dict] = field(default_factory=list)
    duration_s: float = 0.0

    def add(self, path):
        with open(path, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        self.outputs.append({"path": os.path.basename(path), "sha256": digest})

    def to_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "parameters": self.parameters,
            "seed": self.seed,
            "version": self.version,
            "outputs": self.outputs,
            "duration_s": self.duration_s,
        }


# -- argument handling ------------------------------------------------------

def parse_grid(spec: str) -> np.ndarray:
    """'0.5', '0.1,0.5,1' or 'start:stop:step' (stop inclusive)."""
    spec = spec.strip()
    try:
        if ":" in spec:
            parts = [float(p) for p in spec.split(":")]
            if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
                raise ValueError
            start, stop, step = parts
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return np.round(start + step * np.arange(count), 12)
        return np.array([float(p) for p in spec.split(",") if p.strip()])
    except ValueError:
        raise UsageError(f"bad grid spec {spec!r}; use a value, a comma list, or start:stop:step")


def parse_pairs(spec: str) -> List[Tuple[int, int]]:
    """'1,0;1,1' -> [(1, 0), (1, 1)]."""
    out = []
    try:
        for chunk in spec.split(";"):
            if chunk.strip():
                m, n = (int(v) for v in chunk.split(","))
                if m < 0 or n < 0:
                    raise ValueError
                out.append((m, n))
    except ValueError:
        raise UsageError(f"bad pair list {spec!r}; use e.g. '1,0;1,1'")
    if not out:
        raise UsageError("empty pair list")
    return out


def _common(p: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="RNG seed (default 0)")
    p.add_argument("--out-dir", default=d("."), help="output directory (default .)")
    p.add_argument("--format", choices=("csv", "json"), default=d("csv"), help="tabular output format")
    p.add_argument("--config", default=d(None), help="JSON file of parameter defaults (keys as flag names)")


def _sim_flags(p: argparse.ArgumentParser):
    p.add_argument("--source", choices=("thermal", "laser"), default="thermal")
    p.add_argument("--nbar", type=float, default=0.66, help="mean detected photons per bin per detector")
    p.add_argument("--mu-peak", type=float, default=1.0)
    p.add_argument("--sigma-x", type=float, default=1.0, help="spatial coherence width (units of --dx)")
    p.add_argument("--tau-c", type=float, default=2e-6, help="coherence time in seconds")
    p.add_argument("--bin-width", type=float, default=1e-6, help="bin width in seconds")
    p.add_argument("--n-bins", type=int, default=1_000_000)
    p.add_argument("--dx", type=float, default=0.0, help="detector separation")
    p.add_argument("--tag-resolution", type=float, default=1e-12, help="time-tag tick in seconds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="photonstat", description=__doc__.split("\n\n")[0])
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analytic", help="closed-form g_mn over an (nbar, mu) grid")
    _common(p, suppress=True)
    p.add_argument("--nbar", default="0.5", help="grid spec for nbar")
    p.add_argument("--mu", default="1", help="grid spec for mu")
    p.add_argument("--pairs", default=None, help="(m,n) list, e.g. '1,0;1,1'")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--n", type=int, default=0)

    p = sub.add_parser("simulate", help="simulate a count stream and write PTAG time tags")
    _common(p, suppress=True)
    _sim_flags(p)
    p.add_argument("--counts-csv", action="store_true", help="also write the binned counts as CSV")

    p = sub.add_parser("correlate", help="estimate g_mn(lag) from a PTAG or counts-CSV file")
    _common(p, suppress=True)
    p.add_argument("input")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--n", type=int, default=0)
    p.add_argument("--max-lag", type=int, default=200)
    p.add_argument("--bin-width", type=float, default=1e-6, help="bin width in seconds")

    p = sub.add_parser("figure", help="emit the data behind one of the standard figures")
    _common(p, suppress=True)
    p.add_argument("figure_id", choices=FIGURES)
    p.add_argument("--n-bins", type=int, default=1_000_000, help="bins per simulated run (figures 6-8)")
    p.add_argument("--tau-c", type=float, default=2e-6, help="coherence time in seconds")
    p.add_argument("--sigma-x", type=float, default=1.0, help="spatial coherence width")
    p.add_argument("--mu-peak", type=float, default=1.0, help="mutual coherence at zero separation")

    p = sub.add_parser("verify", help="run oracle and invariant checks; exit 1 on failure")
    _common(p, suppress=True)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                conf = json.load(fh)
        except (OSError, ValueError) as exc:
            raise FormatError(f"cannot read config {args.config}: {exc}")
        explicit = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
        for key, value in conf.items():
            k = key.replace("-", "_")
            if not hasattr(args, k):
                raise UsageError(f"unknown config key {key!r}")
            if k not in explicit:
                setattr(args, k, value)
    return args


def _sim_config(args) -> SimConfig:
    try:
        return SimConfig(
            source=args.source,
            nbar=args.nbar,
            coherence=CoherenceModel(sigma_x=args.sigma_x, tau_c=args.tau_c, mu_peak=args.mu_peak),
            bin_width=args.bin_width,
            n_bins=args.n_bins,
            dx=args.dx,
            seed=args.seed,
            tag_resolution=args.tag_resolution,
        )
    except ValueError as exc:
        raise UsageError(str(exc))


# -- output helpers ---------------------------------------------------------

def _write_table(manifest: RunManifest, out_dir: str, stem: str, header, rows, fmt: str):
    rows = list(rows)
    if fmt == "json":
        path = os.path.join(out_dir, stem + ".json")
        recs = [{h: (None if isinstance(v, float) and math.isnan(v) else v) for h, v in zip(header, row)} for row in rows]
        write_json(path, recs)
    else:
        path = os.path.join(out_dir, stem + ".csv")
        write_rows(path, header, rows)
    manifest.add(path)
    return path


def _g_or_nan(params: ThermalParams, m: int, n: int) -> float:
    try:
        return g_mn(params, (m, n))
    except UndefinedCorrelationError:
        return math.nan


def _curve_rows(curve: GmnCurve):
    for x, g, s, c in curve.rows():
        yield x, g, s, c


CURVE_HEADER = ["lag_or_dx", "g_value", "stderr", "coincidences"]


# -- subcommands ------------------------------------------------------------

def analytic_rows(nbars, mus, pairs):
    for nb in nbars:
        for mu in mus:
            p = ThermalParams(float(nb), float(mu))
            for m, n in pairs:
                yield float(nb), float(mu), m, n, _g_or_nan(p, m, n), reference_g2(float(mu))


ANALYTIC_HEADER = ["nbar", "mu", "m", "n", "g_value", "reference_g2"]


def cmd_analytic(args, manifest: RunManifest):
    nbars = parse_grid(args.nbar)
    mus = parse_grid(args.mu)
    if np.any(nbars < 0) or np.any((mus < 0) | (mus > 1)):
        raise UsageError("grid values out of range: need nbar >= 0 and 0 <= mu <= 1")
    pairs = parse_pairs(args.pairs) if args.pairs else [(args.m, args.n)]
    manifest.parameters.update(nbar=nbars.tolist(), mu=mus.tolist(), pairs=pairs)
    _write_table(manifest, args.out_dir, "analytic", ANALYTIC_HEADER, analytic_rows(nbars, mus, pairs), args.format)


def cmd_simulate(args, manifest: RunManifest):
    cfg = _sim_config(args)
    manifest.parameters.update(cfg.to_dict())
    path = os.path.join(args.out_dir, "simulation.ptag")
    simulate_to_ptag(cfg, path)
    manifest.add(path)
    if args.counts_csv:
        cpath = os.path.join(args.out_dir, "counts.csv")
        write_counts_csv(cpath, simulate(cfg))
        manifest.add(cpath)


def _is_ptag(path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(len(MAGIC)) == MAGIC


def cmd_correlate(args, manifest: RunManifest):
    manifest.parameters.update(input=os.path.abspath(args.input), m=args.m, n=args.n, max_lag=args.max_lag, bin_width=args.bin_width)
    if _is_ptag(args.input):
        tallies = correlate_ptag(args.input, args.bin_width, args.m, args.n, args.max_lag)
    else:
        from .correlate import gmn_tallies

        stream = read_counts_csv(args.input, fallback_bin_width=args.bin_width)
        tallies = gmn_tallies(stream, args.m, args.n, args.max_lag)
    curve = tallies.to_curve()
    _write_table(manifest, args.out_dir, "gmn", CURVE_HEADER, _curve_rows(curve), args.format)
    g0, s0 = curve.at(0)
    summary = {
        "m": args.m,
        "n": args.n,
        "n_bins": tallies.n_bins,
        "max_lag": args.max_lag,
        "g_lag0": None if math.isnan(g0) else g0,
        "stderr_lag0": None if math.isnan(s0) else s0,
    }
    lo, hi = DEFAULT_BACKGROUND
    if args.max_lag >= lo:
        ratio, se = peak_background_normalize(curve, (lo, min(hi, args.max_lag)))
        summary.update(peak_background=ratio, peak_background_stderr=se, background_lags=[lo, min(hi, args.max_lag)])
    path = os.path.join(args.out_dir, "gmn_summary.json")
    write_json(path, summary)
    manifest.add(path)


def _figure_analytic(fig: str):
    if fig in ("2", "3"):
        nbars = parse_grid("0.05:10:0.05")
        mus = parse_grid("0:1:0.02")
        pairs = [(1, 1)] if fig == "2" else [(1, 0)]
        return analytic_rows(nbars, mus, pairs)
    pairs = [(0, 0), (1, 0), (2, 0), (1, 1)]
    if fig in ("4a1", "4a2"):
        return analytic_rows([1.0 if fig == "4a1" else 5.0], parse_grid("0:1:0.01"), pairs)
    return analytic_rows(parse_grid("0.05:10:0.05"), [0.5 if fig == "4b1" else 1.0], pairs)


def cmd_figure(args, manifest: RunManifest):
    fig = args.figure_id
    manifest.parameters["figure"] = fig
    stem = f"figure_{fig}"
    if fig in ("2", "3", "4a1", "4a2", "4b1", "4b2"):
        _write_table(manifest, args.out_dir, stem, ANALYTIC_HEADER, _figure_analytic(fig), args.format)
        return
    coh = CoherenceModel(sigma_x=args.sigma_x, tau_c=args.tau_c, mu_peak=args.mu_peak)
    manifest.parameters.update(n_bins=args.n_bins, coherence=vars(coh))
    if fig == "6":
        cfg = SimConfig(nbar=0.66, coherence=coh, n_bins=args.n_bins, seed=args.seed)
        stream = simulate(cfg)
        rows = []
        for m in range(5):
            curve = estimate_gmn(stream, m, 0, 50)
            for k, g, s, c in curve.rows():
                rows.append((m, 0, k, float(f"{k * cfg.bin_width:.12g}"), g, s, c, g_m0(ThermalParams(0.66, cfg.mu_at_lag(k)), m)))
        header = ["m", "n", "lag", "tau_s", "g_value", "stderr", "coincidences", "analytic"]
        _write_table(manifest, args.out_dir, stem, header, rows, args.format)
    elif fig == "7":
        from .correlate import derive_seed

        rows = []
        for i, nb in enumerate((0.1, 0.2, 0.33, 0.5, 0.66, 0.8, 1.0, 1.25, 1.5, 2.0)):
            for source in ("thermal", "laser"):
                cfg = SimConfig(source=source, nbar=nb, coherence=coh, n_bins=args.n_bins,
                                seed=derive_seed(args.seed, i, source == "laser"))
                stream = simulate(cfg)
                for m in (range(5) if source == "thermal" else (1,)):
                    g, s = estimate_gmn(stream, m, 0, 0).at(0)
                    exact = g_m0(ThermalParams(nb, cfg.mu_at_lag(0)), m)
                    rows.append((source, nb, m, 0, g, s, exact))
        header = ["source", "nbar", "m", "n", "g_value", "stderr", "analytic"]
        _write_table(manifest, args.out_dir, stem, header, rows, args.format)
    else:
        nbar, bin_width = (0.66, 1e-6) if fig == "8a" else (1.98, 3e-6)
        base = SimConfig(nbar=nbar, coherence=coh, bin_width=bin_width, n_bins=args.n_bins, seed=args.seed)
        dx_grid = np.round(np.linspace(-3 * coh.sigma_x, 3 * coh.sigma_x, 13), 12)
        pairs = [(m, 0) for m in range(4)]
        curves = spatial_scans(base, dx_grid, pairs)
        rows = []
        for (m, n), curve in curves.items():
            for x, g, s, c in curve.rows():
                rows.append((m, n, x, g, s, c, g_m0(ThermalParams(nbar, mu_at(coh, x, 0.0)), m)))
        header = ["m", "n", "dx", "g_value", "stderr", "coincidences", "analytic"]
        _write_table(manifest, args.out_dir, stem, header, rows, args.format)


def cmd_verify(args, manifest: RunManifest) -> int:
    from .verify import run_all

    results = run_all(seed=args.seed)
    rows = [(name, "pass" if ok else "FAIL", detail) for name, ok, detail in results]
    for name, status, detail in rows:
        print(f"{status:4s}  {name}: {detail}")
    _write_table(manifest, args.out_dir, "verify", ["check", "status", "detail"], rows, args.format)
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_VERIFY


COMMANDS = {
    "analytic": cmd_analytic,
    "simulate": cmd_simulate,
    "correlate": cmd_correlate,
    "figure": cmd_figure,
    "verify": cmd_verify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    except UsageError as exc:
        print(f"photonstat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"photonstat: error: {exc}", file=sys.stderr)
        return EXIT_IO

    manifest = RunManifest(subcommand=args.command, parameters={}, seed=args.seed)
    start = time.perf_counter()
    try:
        os.makedirs(args.out_dir, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PrecisionWarning)
            code = COMMANDS[args.command](args, manifest) or EXIT_OK
    except UsageError as exc:
        print(f"photonstat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"photonstat: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"photonstat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    manifest.duration_s = time.perf_counter() - start
    write_json(os.path.join(args.out_dir, "manifest.json"), manifest.to_dict())
    return code


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
