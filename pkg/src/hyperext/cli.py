"""Command line interface.

Exit codes: 0 ok, 2 input error, 3 invariant breach, 4 numeric guard,
5 suite failure.
"""
from __future__ import annotations

import json
import os
import platform
import sys
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import click
import numpy as np

from . import __version__, _backend
from .decomposition import (
    CoverBoundError,
    DyadicParam,
    StructureConfig,
    fiber_slice,
    summary_csv,
    tile_cover,
)
from .dyadic import CellSet, DomainError, ExponentPair
from .extension import Density, NumericGuardError, SpacetimeGrid, extend, lp_norm
from .harness import (
    GENERATORS,
    HOLDER_TOL,
    SuiteFailure,
    check_decoupling,
    cross_pairs,
    default_scan_range,
    distant_tiles,
    fit_decay_c0,
    main_ratio_sweep,
    necessity_experiment,
    scan_bilinear_exponent,
)
from .search import SearchParams, search_extremizer

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT, EXIT_GUARD, EXIT_SUITE = 0, 2, 3, 4, 5


class InputError(Exception):
    """Malformed or inconsistent user input."""


# -- configuration -------------------------------------------------------------

DEFAULTS: dict = {
    "exponents": {"s": "7/4", "r": "2"},
    "grid": {"R_t": 8.0, "R_x": 8.0, "M_t": 65, "M_x": 128},
    "structure": {"C": "4", "eps_min_log2": -10, "A_cover": "16", "A": 4},
    "seeds": {"seed": 0},
    "paths": {"set": None, "out": "out"},
    "scan": {"range": None, "mode": "matched", "nodes_extra": 3, "tolerance": 0.1},
    "decay": {
        "gaps": [1, 2, 3, 4, 5],
        "resolution": 8,
        "delta_log2": -2,
        "grid": {"R_t": 4.0, "R_x": 4.0, "M_t": 16, "M_x": 16},
        "c0_min": 0.05,
        "min_monotone": 4,
    },
    "decouple": {"resolution": 8, "keys": [0, 8], "delta_log2": -2},
    "necessity": {
        "s": "8/5",
        "depth": 5,
        "nodes": 5,
        "grid": {"R_t": 4.0, "R_x": 4.0, "M_t": 16, "M_x": 16},
    },
    "sweep": {
        "generators": ["random-cells", "random-tile-unions", "cantor", "staircase"],
        "count": 200,
        "resolution": 6,
        "max_factor": 4.0,
    },
    "search": {
        "budget": "1/16",
        "resolution": 5,
        "iterations": 200,
        "t_initial": 0.05,
        "decay": 0.98,
        "weights": [1.0, 1.0, 1.0, 1.0],
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _grid(d: dict) -> SpacetimeGrid:
    return SpacetimeGrid(
        float(d["R_t"]), float(d["R_x"]), int(d["M_t"]), int(d["M_x"]),
        None if d.get("R_x2") is None else float(d["R_x2"]),
        None if d.get("M_x2") is None else int(d["M_x2"]),
    )


@dataclass
class RunConfig:
    """Validated run configuration; ``raw`` is the merged JSON document."""

    raw: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULTS)))

    def __post_init__(self):
        try:
            self.exponents
            self.grid
            self.structure
            _grid(self.raw["decay"]["grid"])
            _grid(self.raw["necessity"]["grid"])
            self.search_params
            if self.seed < 0 or self.seed >= 1 << 64:
                raise DomainError("seed must be a 64-bit unsigned integer")
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise InputError(f"invalid configuration: {exc}") from exc

    @classmethod
    def load(cls, path: str | None = None, overrides: dict | None = None) -> "RunConfig":
        raw = json.loads(json.dumps(DEFAULTS))
        if path:
            try:
                with open(path) as fh:
                    raw = _merge(raw, json.load(fh))
            except (OSError, json.JSONDecodeError) as exc:
                raise InputError(f"cannot read config {path}: {exc}") from exc
        if overrides:
            raw = _merge(raw, overrides)
        return cls(raw)

    @property
    def exponents(self) -> ExponentPair:
        e = self.raw["exponents"]
        return ExponentPair(Fraction(str(e["s"])), Fraction(str(e["r"])))

    @property
    def grid(self) -> SpacetimeGrid:
        return _grid(self.raw["grid"])

    @property
    def structure(self) -> StructureConfig:
        s = self.raw["structure"]
        return StructureConfig(Fraction(str(s["C"])), DyadicParam(-int(s["eps_min_log2"])), Fraction(str(s["A_cover"])))

    @property
    def seed(self) -> int:
        return int(self.raw["seeds"]["seed"])

    @property
    def search_params(self) -> SearchParams:
        s = self.raw["search"]
        return SearchParams(self.seed, int(s["iterations"]), float(s["t_initial"]), float(s["decay"]), tuple(float(w) for w in s["weights"]))


# -- reports -------------------------------------------------------------------


def versions() -> dict:
    return {
        "hyperext": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "backend": _backend.NAME,
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


@dataclass
class Report:
    command: str
    config: dict
    results: dict
    checks: dict[str, bool] = field(default_factory=dict)
    wall_time: float = 0.0

    def to_json(self) -> dict:
        return _jsonable(
            {
                "command": self.command,
                "config": self.config,
                "results": self.results,
                "checks": self.checks,
                "versions": versions(),
                "wall_time_s": self.wall_time,
            }
        )

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def _write(out: Path, name: str, text: str | bytes) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    if isinstance(text, bytes):
        p.write_bytes(text)
    else:
        p.write_text(text)
    return p


def _finish(ctx_obj: dict, report: Report, t0: float) -> None:
    report.wall_time = time.perf_counter() - t0
    _write(ctx_obj["out"], "report.json", json.dumps(report.to_json(), indent=2) + "\n")
    for name, ok in report.checks.items():
        click.echo(f"{'PASS' if ok else 'FAIL'} {name}")
    if not report.ok:
        raise SuiteFailure(", ".join(k for k, v in report.checks.items() if not v))


def _load_set(path: str | None) -> CellSet:
    if not path:
        raise InputError("--set is required")
    try:
        return CellSet.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read set file {path}: {exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"malformed set file {path}: {exc}") from exc


def _parse_grid(value: str | None) -> dict | None:
    if value is None:
        return None
    parts = value.split(",")
    if len(parts) != 4:
        raise InputError("--grid expects Rt,Rx,Mt,Mx")
    try:
        Rt, Rx, Mt, Mx = float(parts[0]), float(parts[1]), int(parts[2]), int(parts[3])
    except ValueError as exc:
        raise InputError(f"bad --grid value {value!r}") from exc
    return {"R_t": Rt, "R_x": Rx, "M_t": Mt, "M_x": Mx}


# -- commands ------------------------------------------------------------------


@click.group()
@click.version_option(__version__)
def cli():
    """Extension-operator laboratory for the saddle xi_1 xi_2."""


def common(f):
    f = click.option("--config", "config_path", type=str, default=None, help="RunConfig JSON file.")(f)
    f = click.option("--set", "set_path", type=str, default=None, help="CellSet JSON file.")(f)
    f = click.option("--out", "out", type=str, default=None, help="Output directory.")(f)
    f = click.option("--seed", type=int, default=None, help="Seed (unsigned 64-bit).")(f)
    f = click.option("--grid", "grid", type=str, default=None, help="Rt,Rx,Mt,Mx")(f)
    return f


def _setup(config_path, set_path, out, seed, grid) -> tuple[RunConfig, dict]:
    over: dict = {}
    g = _parse_grid(grid)
    if g:
        over["grid"] = g
    if seed is not None:
        over["seeds"] = {"seed": seed}
    if set_path:
        over["paths"] = {"set": set_path}
    if out:
        over.setdefault("paths", {})["out"] = out
    cfg = RunConfig.load(config_path, over)
    return cfg, {"out": Path(cfg.raw["paths"]["out"])}


@cli.command()
@common
def decompose(config_path, set_path, out, seed, grid):
    """Fibre slicing and near-tile covers of a set."""
    t0 = time.perf_counter()
    cfg, obj = _setup(config_path, set_path, out, seed, grid)
    omega = _load_set(cfg.raw["paths"]["set"])
    if omega.domain != "unit":
        raise InputError("decompose expects a set on the unit domain")
    fd = fiber_slice(omega)
    summary = []
    covers = {}
    for K, part in fd:
        cover = tile_cover(part, cfg.structure, K=K)
        covers[K] = cover
        _write(obj["out"], f"cover_K{K}.json", json.dumps(cover.to_json()) + "\n")
        summary.append(summary_csv(cover.summary_rows(), {"K": K, "J": cover.J}))
    header = "K,J,delta,tile_count,residual_measure\n"
    body = "".join(s.split("\n", 1)[1] for s in summary)
    _write(obj["out"], "summary.csv", header + body)
    from .decomposition import cover_contains, is_partition

    checks = {}
    if covers:
        pieces = []
        for c in covers.values():
            pieces += [e.residual for e in c.entries.values()] + [c.unresolved]
        checks["partition"] = is_partition(pieces, omega)
        checks["cover_contains"] = all(cover_contains(c) for c in covers.values())
        if not all(checks.values()):
            raise AssertionError("decomposition invariant breached")
    results = {K: {"J": c.J, "tile_counts": c.tile_counts()} for K, c in covers.items()}
    _finish(obj, Report("decompose", cfg.raw, results, checks), t0)


def _field_and_norm(cfg: RunConfig):
    omega = _load_set(cfg.raw["paths"]["set"])
    e = cfg.exponents
    F = extend(Density(omega), cfg.grid)
    return omega, F, lp_norm(F, 2 * e.s)


@cli.command("extend")
@common
def extend_cmd(config_path, set_path, out, seed, grid):
    """Sample the extension of a set's indicator and write the field."""
    t0 = time.perf_counter()
    cfg, obj = _setup(config_path, set_path, out, seed, grid)
    omega, F, norm = _field_and_norm(cfg)
    if F.grid.isotropic:
        _write(obj["out"], "field.bin", F.dumps())
    _write(obj["out"], "slice_t0.csv", F.slice_csv([F.grid.M_t // 2]))
    click.echo(f"{norm:.12g}")
    _finish(obj, Report("extend", cfg.raw, {"norm": norm, "p": str(2 * cfg.exponents.s)}), t0)


@cli.command()
@common
def norm(config_path, set_path, out, seed, grid):
    """Print ||E chi||_2s with 12 significant digits."""
    t0 = time.perf_counter()
    cfg, obj = _setup(config_path, set_path, out, seed, grid)
    omega, F, value = _field_and_norm(cfg)
    click.echo(f"{value:.12g}")
    _finish(obj, Report("norm", cfg.raw, {"norm": value, "p": str(2 * cfg.exponents.s)}), t0)


def _holder_ok(slacks) -> bool:
    return min(slacks, default=0.0) >= -HOLDER_TOL


@cli.command("scan-bilinear")
@common
def scan_bilinear(config_path, set_path, out, seed, grid):
    """Bilinear exponent scan over separated tile pairs."""
    t0 = time.perf_counter()
    cfg, obj = _setup(config_path, set_path, out, seed, grid)
    sc = cfg.raw["scan"]
    rng_ = sc["range"] or default_scan_range()
    res = scan_bilinear_exponent(cfg.exponents, rng_, cfg.grid, int(sc["nodes_extra"]), sc["mode"])
    _write(obj["out"], "scan.csv", res.to_csv())
    checks = {
        "holder": _holder_ok(res.holder_slacks),
        "slope": abs(res.fit.slope - res.expected_slope) <= float(sc["tolerance"]),
    }
    _finish(obj, Report("scan-bilinear", cfg.raw, res.to_json(), checks), t0)


@cli.command("fit-decay")
@common
def fit_decay(config_path, set_path, out, seed, grid):
    """Decay constant of bilinear products across fibre scales."""
    t0 = time.perf_counter()
    cfg, obj = _setup(config_path, set_path, out, seed, grid)
    d = cfg.raw["decay"]
    pairs = cross_pairs(d["gaps"], int(d["resolution"]), cfg.structure)
    fit = fit_decay_c0(pairs, DyadicParam(-int(d["delta_log2"])), cfg.exponents, _grid(d["grid"]), same_j=d["gaps"])
    _write(obj["out"], "decay.csv", fit.to_csv())
    checks = {
        "holder": _holder_ok(fit.holder_slacks),
        "c0_positive": fit.c0_hat > float(d["c0_min"]),
        "monotone": fit.monotone_run >= int(d["min_monotone"]),
        "same_j_within_25pct": all(abs(r["factor"] - 1) <= 0.25 for r in fit.extras.get("same_j", [])),
    }
    _finish(obj, Report("fit-decay", cfg.raw, fit.to_json(), checks), t0)


@cli.command("decouple-check")
@common
def decouple_check(config_path, set_path, out, seed, grid):
    """Diagonal and off-diagonal split of ||sum E chi_K||_2s^2s."""
    t0 = time.perf_counter()
    cfg, obj = _setup(config_path, set_path, out, seed, grid)
    d = cfg.raw["decouple"]
    family = distant_tiles(int(d["resolution"]), tuple(int(k) for k in d["keys"]))
    A = int(cfg.raw["structure"]["A"])
    rep = check_decoupling(family, DyadicParam(-int(d["delta_log2"])), cfg.exponents, cfg.grid, A)
    r = rep.to_json()
    _write(obj["out"], "decouple.csv", "L,D,off_diagonal,bound,slack\n" + ",".join(repr(float(r[k])) for k in ("L", "D", "off_diagonal", "bound", "slack")) + "\n")
    checks = {
        "holder": _holder_ok(rep.holder_slacks),
        "exact_split": rep.L <= (rep.D + rep.off_diagonal) * (1 + HOLDER_TOL),
        "bound": rep.holds,
    }
    _finish(obj, Report("decouple-check", cfg.raw, r, checks), t0)


@cli.command()
@common
def necessity(config_path, set_path, out, seed, grid):
    """Two-bump example with horizontal separation only, and its control."""
    t0 = time.perf_counter()
    cfg, obj = _setup(config_path, set_path, out, seed, grid)
    d = cfg.raw["necessity"]
    e = ExponentPair(Fraction(str(d["s"])), Fraction(1))
    g = _grid(d["grid"])
    main = necessity_experiment(int(d["depth"]), e, g, int(d["nodes"]))
    ctrl = necessity_experiment(int(d["depth"]), e, g, int(d["nodes"]), control=True)
    _write(obj["out"], "necessity.csv", main.to_csv())
    _write(obj["out"], "necessity_control.csv", ctrl.to_csv())
    growth = main.extras["growth"]
    checks = {
        "holder": _holder_ok(main.holder_slacks + ctrl.holder_slacks),
        "monotone": main.extras["monotone_run"] >= min(5, len(growth)),
        "doubles": growth[-1] > 2.0,
        "control_within_2x": all(0.5 <= v <= 2.0 for v in ctrl.extras["growth"]),
    }
    _finish(obj, Report("necessity", cfg.raw, {"separated": main.to_json(), "control": ctrl.to_json()}, checks), t0)


@cli.command()
@common
def sweep(config_path, set_path, out, seed, grid):
    """Ratio sweep over generated sets against the best single tile."""
    t0 = time.perf_counter()
    cfg, obj = _setup(config_path, set_path, out, seed, grid)
    d = cfg.raw["sweep"]
    rep = main_ratio_sweep(d["generators"], int(d["count"]), cfg.seed, cfg.exponents, cfg.grid, int(d["resolution"]), cfg=cfg.structure)
    _write(obj["out"], "sweep.csv", rep.to_csv())
    checks = {"bounded": rep.relative_max <= float(d["max_factor"])}
    _finish(obj, Report("sweep", cfg.raw, rep.to_json(), checks), t0)


@cli.command()
@common
def search(config_path, set_path, out, seed, grid):
    """Anneal the ratio over tile unions of a fixed measure."""
    t0 = time.perf_counter()
    cfg, obj = _setup(config_path, set_path, out, seed, grid)
    d = cfg.raw["search"]
    best, trace = search_extremizer(cfg.exponents, Fraction(str(d["budget"])), cfg.search_params, cfg.grid, int(d["resolution"]))
    _write(obj["out"], "trace.csv", trace.to_csv())
    _write(obj["out"], "best.json", best.cells.dumps() + "\n")
    b = trace.best
    checks = {"best_monotone": all(x <= y for x, y in zip(b, b[1:]))}
    results = {"best": best.to_json(), "best_ratio": b[-1], "start_ratio": trace.rows[0][1]}
    _finish(obj, Report("search", cfg.raw, results, checks), t0)


def main(argv: list[str] | None = None) -> int:
    """Run the CLI and map failures onto the exit-code contract."""
    try:
        cli.main(args=argv, prog_name="hyperext", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_INPUT
    except click.exceptions.Abort:
        return EXIT_INPUT
    except NumericGuardError as exc:
        click.echo(f"numeric guard: {exc}", err=True)
        return EXIT_GUARD
    except SuiteFailure as exc:
        click.echo(f"suite failure: {exc}", err=True)
        return EXIT_SUITE
    except (InputError, DomainError) as exc:
        click.echo(f"input error: {exc}", err=True)
        return EXIT_INPUT
    except (CoverBoundError, AssertionError) as exc:
        click.echo(f"invariant breach: {exc}", err=True)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
