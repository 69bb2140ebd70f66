"""``ipdsaw`` command line.

Every command resolves its parameters (flags over JSON config over
defaults), hashes the resolved configuration and writes its outputs as
``<command>-<hash>.<ext>`` in the output directory.  Nothing time- or
host-dependent enters an output file, so reruns are byte-identical.

Exit codes: 0 ok, 1 usage error, 2 validation failure, 3 resource ceiling.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .areadp import SAMPLING_L_CEILING, MemoryBudgetError, PolymerSampler
from .cache import CacheIntegrityError, cached_partition_table, default_cache_dir
from .collapse import (DEFAULT_EPS_GRID, exponent_scan, free_energy_curve, write_exponent_csv,
                       write_free_energy_csv)
from .experiments import calibrate_window, mean_profiles, run_samples
from .law import DomainError, WalkLaw, beta_c
from .polymer import EnumerationCapError, ModelKind, bead_decomposition
from .spectral import SpectralConvergenceError, h_beta
from .tilt import PhaseError, TiltSolverError, solve_tilt, wulff_shape

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RESOURCE = 0, 1, 2, 3
COMMANDS = ("free-energy", "exponent", "hbeta", "tilt", "wulff", "sample", "beads", "validate")
SEEDED = ("sample", "beads")

DEFAULTS = {
    "model": "u",
    "beta": None,
    "L": 250,
    "samples": 100,
    "seed": None,
    "out": ".",
    "tol": 1e-10,
    "cache": None,
    "eps": list(DEFAULT_EPS_GRID),
    "delta": [0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001],
    "q": [0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 10.0],
    "grid": 1025,
    "quick": False,
}
# keys that do not influence any output value
_NOT_HASHED = ("out", "cache", "config")


class UsageError(Exception):
    pass


class CeilingError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ipdsaw", description="Exact numerics for the IPDSAW polymer model.")
    p.add_argument("--version", action="version", version=f"ipdsaw {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--model", choices=("u", "nu"))
    p.add_argument("--beta", type=_float_list, help="one value or a comma-separated grid")
    p.add_argument("--L", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--out")
    p.add_argument("--tol", type=float)
    p.add_argument("--cache", help="table cache directory (else $IPDSAW_CACHE)")
    p.add_argument("--config", help="JSON file with any of the flags above")
    p.add_argument("--eps", type=_float_list, help="exponent: distances below beta_c")
    p.add_argument("--delta", type=_float_list, help="hbeta: discount grid")
    p.add_argument("--q", type=_float_list, help="tilt: area grid")
    p.add_argument("--grid", type=int, help="wulff: number of s points")
    p.add_argument("--quick", action="store_true", default=None, help="validate: smaller sizes")
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["command"] = args.command
    cfg["cache"] = str(default_cache_dir(cfg["cache"])) if default_cache_dir(cfg["cache"]) else None
    if isinstance(cfg["beta"], (int, float)):
        cfg["beta"] = [float(cfg["beta"])]
    _check(cfg)
    return cfg


def _check(cfg: dict) -> None:
    try:
        cfg["model"] = ModelKind.parse(cfg["model"]).value
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if cfg["beta"] is not None and any(not (b > 0 and math.isfinite(b)) for b in cfg["beta"]):
        raise UsageError("beta values must be positive and finite")
    if not cfg["tol"] > 0:
        raise UsageError("tol must be positive")
    if not isinstance(cfg["L"], int) or cfg["L"] < 1:
        raise UsageError("L must be a positive integer")
    if not isinstance(cfg["samples"], int) or cfg["samples"] < 0:
        raise UsageError("samples must be a non-negative integer")
    cmd = cfg["command"]
    if cmd in SEEDED or (cmd == "wulff" and cfg["samples"] > 0 and cfg["seed"] is not None):
        if cfg["seed"] is None:
            raise UsageError(f"{cmd} needs --seed")
        if cfg["samples"] < 1:
            raise UsageError(f"{cmd} needs --samples >= 1")
        if cfg["L"] > SAMPLING_L_CEILING:
            raise CeilingError(f"sampling is capped at L = {SAMPLING_L_CEILING}, got {cfg['L']}")


def config_hash(cfg: dict) -> str:
    keyed = {k: v for k, v in cfg.items() if k not in _NOT_HASHED}
    text = json.dumps(keyed, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _out_path(cfg: dict, suffix: str, ext: str) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{cfg['command']}-{config_hash(cfg)}"
    return out / f"{stem}{suffix}.{ext}"


def _write_json(path: Path, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1, allow_nan=True)
        fh.write("\n")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _betas(cfg: dict, default) -> list:
    return cfg["beta"] if cfg["beta"] else list(default)


# ------------------------------------------------------------------ commands

def cmd_free_energy(cfg: dict) -> list:
    bc = beta_c(cfg["model"])
    grid = _betas(cfg, np.round(np.linspace(bc - 0.3, bc + 0.3, 13), 12))
    path = _out_path(cfg, "", "csv")
    write_free_energy_csv(free_energy_curve(grid, cfg["model"], cfg["tol"]), path)
    return [path]


def cmd_exponent(cfg: dict) -> list:
    path = _out_path(cfg, "", "csv")
    write_exponent_csv(exponent_scan(cfg["model"], cfg["eps"], cfg["tol"]), path)
    return [path]


def cmd_hbeta(cfg: dict) -> list:
    rows = []
    for b in _betas(cfg, [beta_c(cfg["model"])]):
        law = WalkLaw(b)
        for d in cfg["delta"]:
            h = h_beta(law, d, cfg["tol"])
            rows.append((b, d, h, h / d ** (2.0 / 3.0) if d > 0 else math.nan))
    path = _out_path(cfg, "", "csv")
    _write_rows(path, ["beta", "delta", "h_beta", "ratio"], rows)
    return [path]


def cmd_tilt(cfg: dict) -> list:
    rows = []
    for b in _betas(cfg, [1.0]):
        law = WalkLaw(b)
        for q in cfg["q"]:
            tp = solve_tilt(law, q, cfg["tol"])
            res = float(np.linalg.norm(tp.grad - np.array([q, 0.0])))
            rows.append((b, q, tp.h0, tp.h1, tp.value, tp.value - tp.h0 * q, res))
    path = _out_path(cfg, "", "csv")
    _write_rows(path, ["beta", "q", "h0", "h1", "L_Lambda", "decay_rate", "residual"], rows)
    return [path]


def _single_beta(cfg: dict, default: float) -> float:
    betas = _betas(cfg, [default])
    if len(betas) != 1:
        raise UsageError(f"{cfg['command']} takes a single beta")
    return betas[0]


def _sampler(cfg: dict, law: WalkLaw) -> PolymerSampler:
    table = cached_partition_table(law, cfg["L"], cache_dir=cfg["cache"])
    return PolymerSampler(law, cfg["model"], cfg["L"], ret_table=table)


def cmd_wulff(cfg: dict) -> list:
    law = WalkLaw(_single_beta(cfg, 2.0))
    w = wulff_shape(law, cfg["model"], cfg["grid"])
    path = _out_path(cfg, "", "csv")
    w.to_csv(path)
    paths = [path]
    if cfg["seed"] is not None and cfg["samples"] > 0:
        draws = _sampler(cfg, law).sample(cfg["samples"], cfg["seed"])
        prof = mean_profiles(draws, w.s)
        rows = zip(w.s, w.gamma, prof["upper_mean"], prof["lower_mean"], prof["abs_walk_mean"])
        p2 = _out_path(cfg, "-profiles", "csv")
        _write_rows(p2, ["s", "gamma_star", "upper_mean", "lower_mean", "abs_walk_mean"], rows)
        paths.append(p2)
    return paths


def cmd_sample(cfg: dict) -> list:
    law = WalkLaw(_single_beta(cfg, 2.0))
    try:
        wulff = wulff_shape(law, cfg["model"])
    except PhaseError:
        print("warning: beta is not in the collapsed phase; shape distances are skipped",
              file=sys.stderr)
        wulff = None
    stats = run_samples(law, cfg["model"], cfg["L"], cfg["samples"], cfg["seed"], wulff,
                        sampler=_sampler(cfg, law))
    rec_path = _out_path(cfg, "-records", "csv")
    fields = list(stats.records[0].__dataclass_fields__)
    _write_rows(rec_path, ["draw"] + fields,
                ([j] + [getattr(r, f) for f in fields] for j, r in enumerate(stats.records)))
    summary = dict(stats.summary)
    summary.update({"beta": law.beta, "model": cfg["model"], "L": cfg["L"], "seed": cfg["seed"],
                    "a_star": wulff.a_star if wulff else None,
                    "window_c_q95": calibrate_window(stats)})
    js_path = _out_path(cfg, "-summary", "json")
    _write_json(js_path, summary)
    return [rec_path, js_path]


def cmd_beads(cfg: dict) -> list:
    law = WalkLaw(_single_beta(cfg, 2.0))
    draws = _sampler(cfg, law).sample(cfg["samples"], cfg["seed"])
    rows = []
    for j, l in enumerate(draws):
        bd = bead_decomposition(l)
        for b, (first, last) in enumerate(bd.intervals, start=1):
            rows.append((j, b, first, last, last - first + 1, int(b == bd.j_max)))
    path = _out_path(cfg, "", "csv")
    _write_rows(path, ["draw", "bead", "first", "last", "size", "largest"], rows)
    return [path]


def cmd_validate(cfg: dict) -> tuple:
    from .validation import run_all

    results = run_all(cfg["cache"], quick=bool(cfg["quick"]))
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<28} residual={r.residual:.3e}  {r.detail}")
    path = _out_path(cfg, "", "json")
    _write_json(path, [{"name": r.name, "passed": bool(r.passed), "residual": float(r.residual),
                        "detail": r.detail} for r in results])
    return [path], all(r.passed for r in results)


HANDLERS = {"free-energy": cmd_free_energy, "exponent": cmd_exponent, "hbeta": cmd_hbeta,
            "tilt": cmd_tilt, "wulff": cmd_wulff, "sample": cmd_sample, "beads": cmd_beads}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if cfg["command"] == "validate":
            paths, ok = cmd_validate(cfg)
        else:
            paths, ok = HANDLERS[cfg["command"]](cfg), True
    except (CeilingError, MemoryBudgetError, EnumerationCapError, SpectralConvergenceError,
            TiltSolverError, MemoryError) as exc:
        print(f"ipdsaw: resource ceiling: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except CacheIntegrityError as exc:
        print(f"ipdsaw: cache integrity failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (UsageError, PhaseError, DomainError, ValueError) as exc:
        print(f"ipdsaw: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for p in paths:
        print(p)
    return EXIT_OK if ok else EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
