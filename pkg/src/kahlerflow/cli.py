"""Batch experiment driver.

Orchestrates one experiment per invocation: exact class-ledger
validation, then the collapsing run, then monitoring and the rate
report, writing diffable text artifacts (trajectory CSV, profile
dumps, manifest, report) into the output directory.

Configs are plain text, one ``dotted.key = value`` per line, ``#``
comments allowed.  The class ledger is given exactly (rational
coefficients); the collapse time is computed from it, never stated.
The geometric family is built from the ledger by a fixed convention:
the fiber momentum span is the initial class restricted to the fiber
(both coefficients for the rank-2 bundle basis, ``(0, fiber coeff)``
for a product), the limit base size is the first coefficient of the
target class, and for products the initial base size is the first
coefficient of the initial class.

Exit codes: 0 success, 2 validation/configuration failure, 3 solver
abort, 4 rate-report FAIL.  No solver artifact is written unless
validation passes.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .calabi import KIND_BUNDLE, KIND_PRODUCT, AnsatzModel, Profile, ReferenceFamily
from .classes import (
    GeneratorBasis,
    IntersectionTable,
    KahlerClass,
    PositivityCone,
    collapsing_condition_residual,
    singular_time,
)
from .errors import ConfigurationError, GeometryError, KahlerFlowError
from .flow import TERM_REACHED, FlowState, StepControl, run
from .monitors import (
    BConfig,
    default_bconfig,
    first_violation,
    observe_run,
    read_csv,
    sample_schedule,
    write_csv,
)
from .rates import RateCheck, report_lines

#: schema of the companion CSV holding the grid minima of the
#: two-sided monitored quantities (the trajectory CSV carries suprema)
INFIMA_COLUMNS = (
    "t",
    "vr_inf",
    "npot_inf",
    "trace0_scaled_inf",
    "trace_sigma_inf",
    "Q_inf",
)

_KINDS = {"bundle": KIND_BUNDLE, "product": KIND_PRODUCT}
_GAUGES = ("zero", "shrinking")


@dataclass(frozen=True)
class ExperimentConfig:
    """One parsed experiment: model, exact class ledger, solver and
    monitor settings, rate checks, and the output directory."""

    name: str
    sha256: str
    model: AnsatzModel
    basis: GeneratorBasis
    table: IntersectionTable
    cone: PositivityCone
    omega0: KahlerClass
    c1: KahlerClass
    target: KahlerClass
    control: StepControl
    gauge: str
    per_efold: int
    b_override: float | None
    a_override: float | None
    window: tuple[float, float] | None
    checks: tuple[RateCheck, ...]
    out_dir: str


# ---------------------------------------------------------------------------
# config parsing


def parse_config_text(text: str) -> dict[str, tuple[str, int]]:
    """Key -> (raw value, line number); strict about shape and
    duplicates so every later complaint can cite its line."""
    entries: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(
                f"line {lineno}: expected 'key = value', got {raw.strip()!r}"
            )
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigurationError(
                f"line {lineno}: empty key or value in {raw.strip()!r}"
            )
        if key in entries:
            raise ConfigurationError(
                f"line {lineno}: duplicate key {key!r}"
                f" (first set on line {entries[key][1]})"
            )
        entries[key] = (value, lineno)
    return entries


class _Entries:
    """Typed, line-aware access to parsed key/value pairs."""

    def __init__(self, entries: dict[str, tuple[str, int]]):
        self._entries = entries
        self._used: set[str] = set()

    def _take(self, key: str) -> tuple[str, int]:
        if key not in self._entries:
            raise ConfigurationError(f"missing required key {key!r}")
        self._used.add(key)
        return self._entries[key]

    def lineno(self, key: str) -> int:
        return self._entries[key][1]

    def has(self, key: str) -> bool:
        return key in self._entries

    def matching(self, prefix: str) -> list[str]:
        keys = [k for k in self._entries if k.startswith(prefix)]
        return sorted(keys, key=lambda k: self._entries[k][1])

    def _parse(self, key, caster, what):
        value, lineno = self._take(key)
        try:
            return caster(value)
        except (ValueError, ZeroDivisionError):
            raise ConfigurationError(
                f"line {lineno}: {key} needs {what}, got {value!r}"
            ) from None

    def string(self, key: str, choices=None) -> str:
        value, lineno = self._take(key)
        if choices is not None and value not in choices:
            raise ConfigurationError(
                f"line {lineno}: {key} must be one of {sorted(choices)},"
                f" got {value!r}"
            )
        return value

    def floatval(self, key: str, default=None) -> float:
        if default is not None and not self.has(key):
            return default
        return self._parse(key, float, "a number")

    def intval(self, key: str, default=None) -> int:
        if default is not None and not self.has(key):
            return default
        return self._parse(key, int, "an integer")

    def boolval(self, key: str, default: bool = False) -> bool:
        if not self.has(key):
            return default
        table = {"true": True, "yes": True, "1": True,
                 "false": False, "no": False, "0": False}
        return self._parse(
            key, lambda v: table[v.lower()], "a boolean (true/false)"
        )

    def fractions(self, key: str, count: int | None = None) -> tuple[Fraction, ...]:
        def cast(value: str) -> tuple[Fraction, ...]:
            return tuple(Fraction(part) for part in value.split())

        out = self._parse(key, cast, "space-separated rationals")
        if count is not None and len(out) != count:
            raise ConfigurationError(
                f"line {self.lineno(key)}: {key} needs {count} entries,"
                f" got {len(out)}"
            )
        return out

    def floats(self, key: str, count: int) -> tuple[float, ...]:
        def cast(value: str) -> tuple[float, ...]:
            return tuple(float(part) for part in value.split())

        out = self._parse(key, cast, "space-separated numbers")
        if len(out) != count:
            raise ConfigurationError(
                f"line {self.lineno(key)}: {key} needs {count} entries,"
                f" got {len(out)}"
            )
        return out

    def words(self, key: str) -> tuple[str, ...]:
        value, _ = self._take(key)
        return tuple(value.split())

    def reject_unused(self) -> None:
        for key, (_, lineno) in sorted(
            self._entries.items(), key=lambda kv: kv[1][1]
        ):
            if key not in self._used:
                raise ConfigurationError(f"line {lineno}: unknown key {key!r}")


def build_config(text: str, name: str) -> ExperimentConfig:
    entries = _Entries(parse_config_text(text))

    kind = _KINDS[entries.string("model.kind", choices=set(_KINDS))]
    model = AnsatzModel(
        kind=kind,
        n=entries.intval("model.n"),
        base_einstein=entries.floatval("model.base_einstein"),
    )

    labels = entries.words("classes.labels")
    if len(labels) != 2:
        raise ConfigurationError(
            "family construction needs a rank-2 class basis"
            f" (classes.labels gave {len(labels)} labels)"
        )
    basis = GeneratorBasis(
        labels=labels,
        dim_complex=model.n,
        fiber_dim=entries.intval("classes.fiber_dim", default=1),
    )
    pairings = {}
    for key in entries.matching("classes.table."):
        parts = key.split(".")
        if len(parts) != 4 or not all(p in labels for p in parts[2:]):
            raise ConfigurationError(
                f"line {entries.lineno(key)}: table key must be"
                f" classes.table.<label>.<label> with labels from {labels}"
            )
        pairings[(parts[2], parts[3])] = entries.fractions(key, count=1)[0]
    table = IntersectionTable.from_entries(basis, pairings)
    rows = {}
    for key in entries.matching("classes.cone."):
        rows[key.split(".", 2)[2]] = entries.fractions(key, count=2)
    cone = PositivityCone.from_rows(basis, rows)
    omega0 = KahlerClass(basis, entries.fractions("classes.omega0", count=2))
    c1 = KahlerClass(basis, entries.fractions("classes.c1", count=2))
    target = KahlerClass(basis, entries.fractions("classes.target", count=2))

    control = StepControl(
        n_nodes=entries.intval("solver.n_nodes"),
        radius=entries.floatval("solver.radius"),
        eps_stop=entries.floatval("solver.eps_stop"),
        dt_max=entries.floatval("solver.dt_max", default=0.001),
    )
    gauge = (
        entries.string("solver.gauge", choices=set(_GAUGES))
        if entries.has("solver.gauge")
        else "zero"
    )

    per_efold = entries.intval("monitor.per_efold", default=30)
    b_override = (
        entries.floatval("monitor.B") if entries.has("monitor.B") else None
    )
    a_override = (
        entries.floatval("monitor.A") if entries.has("monitor.A") else None
    )

    window = (
        entries.floats("rates.window", count=2)
        if entries.has("rates.window")
        else None
    )
    check_names: list[str] = []
    for key in entries.matching("rates."):
        if key == "rates.window":
            continue
        check_name = key.split(".")[1]
        if check_name not in check_names:
            check_names.append(check_name)
    checks = tuple(
        RateCheck(
            name=check_name,
            expected=entries.floatval(f"rates.{check_name}.expected"),
            tolerance=entries.floatval(f"rates.{check_name}.tolerance"),
            one_sided=entries.boolval(
                f"rates.{check_name}.one_sided", default=False
            ),
        )
        for check_name in check_names
    )

    out_dir = (
        entries.string("output.dir")
        if entries.has("output.dir")
        else f"runs/{name}"
    )

    entries.reject_unused()
    return ExperimentConfig(
        name=name,
        sha256=hashlib.sha256(text.encode()).hexdigest(),
        model=model,
        basis=basis,
        table=table,
        cone=cone,
        omega0=omega0,
        c1=c1,
        target=target,
        control=control,
        gauge=gauge,
        per_efold=per_efold,
        b_override=b_override,
        a_override=a_override,
        window=tuple(window) if window is not None else None,
        checks=checks,
        out_dir=out_dir,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return build_config(path.read_text(), path.stem)


# ---------------------------------------------------------------------------
# validation


def _cone_values(cone: PositivityCone, cls: KahlerClass) -> dict[str, Fraction]:
    return {
        name: sum(c * x for c, x in zip(row, cls.coeffs))
        for name, row in cone.functionals
    }


def validate_lines(cfg: ExperimentConfig) -> tuple[list[str], bool]:
    """Exact-ledger validation report: collapse time, class trajectory,
    collapsing residual, and positivity-cone status."""
    lines = []
    T = singular_time(cfg.omega0, cfg.c1, cfg.cone)
    finite = isinstance(T, Fraction)
    lines.append(f"T = {T}")
    trajectory = "; ".join(
        f"{label}: {w0} - ({c}) t"
        for label, w0, c in zip(cfg.basis.labels, cfg.omega0.coeffs, cfg.c1.coeffs)
    )
    lines.append(f"class(t) = {trajectory}")
    start = _cone_values(cfg.cone, cfg.omega0)
    interior = all(v > 0 for v in start.values())
    lines.append(
        "cone at t=0: "
        + ", ".join(f"{name} = {value}" for name, value in start.items())
        + (" (interior)" if interior else " (NOT interior)")
    )
    if finite:
        residual = collapsing_condition_residual(cfg.omega0, cfg.c1, T, cfg.target)
        zero = all(r == 0 for r in residual)
        lines.append(f"residual = ({', '.join(str(r) for r in residual)})")
        at_T = {
            name: start[name] - T * sum(c * x for c, x in zip(row, cfg.c1.coeffs))
            for name, row in cfg.cone.functionals
        }
        vanishing = [name for name, value in at_T.items() if value == 0]
        lines.append(f"vanishing at T: {', '.join(vanishing) if vanishing else 'none'}")
    else:
        zero = False
        lines.append("residual = (not defined: T is not finite)")
    ok = finite and zero and interior
    lines.append(f"verdict: {'OK' if ok else 'FAIL'}")
    return lines, ok


def family_from_config(cfg: ExperimentConfig) -> ReferenceFamily:
    """Build the geometric family from the exact ledger (documented
    convention in the module docstring)."""
    T = singular_time(cfg.omega0, cfg.c1, cfg.cone)
    a0, b0 = (float(c) for c in cfg.omega0.coeffs)
    lam_sigma = float(cfg.target.coeffs[0])
    if cfg.model.kind == KIND_BUNDLE:
        return ReferenceFamily.for_model(
            cfg.model, T=float(T), fiber_span=(a0, b0), lam_sigma=lam_sigma
        )
    return ReferenceFamily.for_model(
        cfg.model,
        T=float(T),
        fiber_span=(0.0, b0),
        lam_sigma=lam_sigma,
        sigma0=a0,
    )


# ---------------------------------------------------------------------------
# artifacts


def _dump_profile(path: Path, state: FlowState, family: ReferenceFamily) -> None:
    prof = state.profile
    with open(path, "w") as fh:
        fh.write(f"# t = {state.t!r}\n")
        fh.write(f"# T = {family.T!r}\n")
        fh.write(f"# n_nodes = {prof.rho.size}  radius = {float(prof.rho[-1])!r}\n")
        fh.write(f"# base_scale = {prof.base_scale!r}\n")
        fh.write(f"# gauge_offset = {state.gauge_offset!r}\n")
        fh.write("# columns: rho u uprime uprime2\n")
        for row in zip(prof.rho, prof.u, prof.up, prof.upp):
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def _write_infima(path: Path, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(INFIMA_COLUMNS)
        for rec in records:
            writer.writerow([repr(getattr(rec, name)) for name in INFIMA_COLUMNS])


def _bconfig(cfg: ExperimentConfig, family, baseline) -> BConfig:
    base = default_bconfig(family, baseline)
    return BConfig(
        B=base.B if cfg.b_override is None else cfg.b_override,
        A=base.A if cfg.a_override is None else cfg.a_override,
    )


# ---------------------------------------------------------------------------
# commands


def cmd_validate(cfg: ExperimentConfig, quiet: bool = False) -> int:
    lines, ok = validate_lines(cfg)
    if not quiet:
        print("\n".join(lines))
    return 0 if ok else 2


def cmd_run(cfg: ExperimentConfig, quiet: bool = False) -> int:
    if cmd_validate(cfg, quiet=True) != 0:
        if not quiet:
            print("validation failed; no artifacts written", file=sys.stderr)
        return 2
    started = time.perf_counter()
    family = family_from_config(cfg)
    schedule = sample_schedule(family.T, cfg.control.eps_stop, cfg.per_efold)
    result = run(family, cfg.control, gauge=cfg.gauge, sample_times=schedule)
    bcfg = _bconfig(cfg, family, result.states[0].profile)
    records = observe_run(family, result.states, bcfg)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(records, out / "trajectory.csv")
    _write_infima(out / "infima.csv", records)
    _dump_profile(out / "profile_initial.dat", result.states[0], family)
    _dump_profile(out / "profile_final.dat", result.states[-1], family)
    manifest = {
        "config_name": cfg.name,
        "config_sha256": cfg.sha256,
        "package_version": __version__,
        "versions": _dependency_versions(),
        "T": family.T,
        "gauge": result.gauge,
        "grid": {
            "n_nodes": cfg.control.n_nodes,
            "radius": cfg.control.radius,
            "eps_stop": cfg.control.eps_stop,
            "dt_max": cfg.control.dt_max,
        },
        "monitor": {"B": bcfg.B, "A": bcfg.A, "per_efold": cfg.per_efold},
        "termination": result.termination,
        "n_accepted": result.n_accepted,
        "n_rejected": result.n_rejected,
        "n_records": len(records),
        "first_violation": first_violation(records),
        "solver_wall_time_s": result.wall_time,
        "wall_time_s": time.perf_counter() - started,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    ok = result.termination == TERM_REACHED
    if not quiet:
        print(
            f"run: {result.termination}, {len(records)} records,"
            f" artifacts in {out}"
        )
        if not ok:
            print(
                "solver stopped early; diagnostic artifacts retained",
                file=sys.stderr,
            )
    return 0 if ok else 3


def _dependency_versions() -> dict[str, str]:
    import numba
    import scipy

    return {
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def cmd_report(cfg: ExperimentConfig, quiet: bool = False) -> int:
    out = Path(cfg.out_dir)
    csv_path = out / "trajectory.csv"
    if not csv_path.exists():
        raise ConfigurationError(
            f"no trajectory at {csv_path}; run the experiment first"
        )
    columns = read_csv(csv_path)
    T = float(singular_time(cfg.omega0, cfg.c1, cfg.cone))
    lines, ok = report_lines(columns, T, cfg.checks, window=cfg.window)
    lines = lines + [f"overall verdict={'PASS' if ok else 'FAIL'}"]
    with open(out / "report.txt", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if not quiet:
        print("\n".join(lines))
    return 0 if ok else 4


def cmd_all(cfg: ExperimentConfig, quiet: bool = False) -> int:
    code = cmd_validate(cfg, quiet)
    if code != 0:
        return code
    code = cmd_run(cfg, quiet)
    if code != 0:
        return code
    return cmd_report(cfg, quiet)


_COMMANDS = {
    "validate": cmd_validate,
    "run": cmd_run,
    "report": cmd_report,
    "all": cmd_all,
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kahlerflow",
        description="Collapsing-flow experiment driver (validate/run/report).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config path")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument(
            "--cadence",
            type=int,
            default=None,
            help="override monitor samples per e-fold",
        )
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out is not None:
            cfg = replace(cfg, out_dir=args.out)
        if args.cadence is not None:
            cfg = replace(cfg, per_efold=args.cadence)
        return _COMMANDS[args.command](cfg, quiet=args.quiet)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GeometryError as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return 3
    except KahlerFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
