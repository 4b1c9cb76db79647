"""Configuration parsing and the command-line interface.

A configuration is a flat text file of ``key = value`` lines; ``#`` starts a
comment.  Every key has a default, so an empty file is a valid config.
List-valued keys (``identities``, ``grids``, ``residuals``) take
comma-separated values.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import math
import os
import sys
from dataclasses import dataclass
from typing import Sequence

from . import fields as fd
from .constitutive import FluidParams
from .errors import ConfigError, ParameterError, SimulationBlowup, SolverError, UsageError
from .fields import GridSpec
from .manufactured import Family
from .models import ROUTES, ModelKind, PrimState
from .reduction import IDENTITIES, identity_study, reports_csv, study_passes, summary_table
from .timestep import PRESETS, Scenario, Trajectory, diagnostics_csv, relative_drift, simulate

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

_PARAM_KEYS = tuple(f.name for f in dataclasses.fields(FluidParams) if f.name != "free_energy")
_DEFAULT_PARAMS = FluidParams()


@dataclass(frozen=True)
class Config:
    """Everything a CLI run needs; field names are the config-file keys."""

    model: str = "NSK"
    route: str = "gibbs"
    # constitutive constants
    tau1: float = _DEFAULT_PARAMS.tau1
    tau2: float = _DEFAULT_PARAMS.tau2
    a: float = _DEFAULT_PARAMS.a
    lam: float = _DEFAULT_PARAMS.lam
    cv: float = _DEFAULT_PARAMS.cv
    eta: float = _DEFAULT_PARAMS.eta
    zeta: float = _DEFAULT_PARAMS.zeta
    beta: float = _DEFAULT_PARAMS.beta
    eps: float = _DEFAULT_PARAMS.eps
    gamma: float = _DEFAULT_PARAMS.gamma
    delta: float = _DEFAULT_PARAMS.delta
    # grid
    dim: int = 1
    n: int = 64
    length: float = 2.0 * math.pi
    # initial state
    preset: str = "manufactured"
    rho0: float = 1.5
    alpha: float = 0.1
    u0: float = 0.05
    theta0: float = 1.0
    alpha_t: float = 0.01
    alpha_chi: float = 0.02
    k: int = 1
    chi_lo: float = 0.1
    chi_hi: float = 0.9
    width: float = 0.5
    seed: int = 0
    modes: int = 3
    amp: float = 0.05
    # time integration
    end_time: float = 0.1
    cfl: float = 0.4
    dt: float = 0.0
    output_every: int = 10
    output_dir: str = "output"
    residuals: tuple = ()
    # verification
    identities: tuple = ("all",)
    grids: tuple = (64, 128, 256)
    algebraic_tol: float = 1e-10
    min_order: float = 1.9

    # --- derived objects -------------------------------------------------------

    @property
    def kind(self) -> ModelKind:
        return ModelKind.parse(self.model)

    def params(self) -> FluidParams:
        return FluidParams(**{k: getattr(self, k) for k in _PARAM_KEYS})

    def grid(self) -> GridSpec:
        return GridSpec(self.dim, self.n, self.length)

    def study_grids(self) -> list[GridSpec]:
        return [GridSpec(self.dim, n, self.length) for n in self.grids]

    def family(self) -> Family:
        return Family(self.rho0, self.alpha, self.u0, self.theta0, self.alpha_t, self.alpha_chi, self.k)

    def identity_names(self) -> list[str]:
        if "all" in self.identities:
            return list(IDENTITIES)
        return list(self.identities)

    def preset_options(self) -> dict:
        if self.preset == "uniform":
            return {"rho": self.rho0, "theta": self.theta0, "u": self.u0}
        if self.preset == "tanh":
            return {"chi_lo": self.chi_lo, "chi_hi": self.chi_hi, "width": self.width, "theta": self.theta0}
        if self.preset == "manufactured":
            f = self.family()
            return {k: getattr(f, k) for k in ("rho0", "alpha", "u0", "theta0", "alpha_t", "alpha_chi", "k")}
        return {"seed": self.seed, "modes": self.modes, "rho0": self.rho0, "amp": self.amp}

    def scenario(self) -> Scenario:
        return Scenario(
            kind=self.kind,
            params=self.params(),
            grid=self.grid(),
            preset=self.preset,
            preset_options=self.preset_options(),
            end_time=self.end_time,
            cfl=self.cfl,
            output_every=self.output_every,
            residuals=tuple(self.residuals),
            route=self.route,
            dt=self.dt or None,
        )


_FIELDS = {f.name: f for f in dataclasses.fields(Config)}
_LIST_ITEM = {"identities": str, "residuals": str, "grids": int}


def _convert(key: str, raw: str):
    default = _FIELDS[key].default
    if key in _LIST_ITEM:
        items = [s.strip() for s in raw.split(",") if s.strip()]
        return tuple(_scalar(_LIST_ITEM[key], s) for s in items)
    return _scalar(type(default), raw)


def _scalar(typ, raw: str):
    if typ is str:
        if not raw:
            raise ValueError("empty value")
        return raw
    if typ is int:
        value = float(raw)
        if not value.is_integer():
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(value)
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError(f"expected a finite number, got {raw!r}")
    return value


def _validate(cfg: Config) -> None:
    """Raise ``ConfigError`` (without a line number) naming the first bad key."""

    def bad(key, msg):
        raise ConfigError(msg, key=key)

    try:
        ModelKind.parse(cfg.model)
    except UsageError as exc:
        bad("model", str(exc))
    if cfg.route not in ROUTES:
        bad("route", f"route must be one of {ROUTES}")
    try:
        cfg.params()
        cfg.grid()
    except ParameterError as exc:
        bad(exc.key, str(exc))
    if cfg.preset not in PRESETS:
        bad("preset", f"preset must be one of {PRESETS}")
    for key in ("rho0", "theta0", "width", "cfl", "algebraic_tol"):
        if not getattr(cfg, key) > 0:
            bad(key, f"{key} must be > 0")
    for key in ("alpha", "alpha_t", "amp"):
        if not 0 <= getattr(cfg, key) < 1:
            bad(key, f"{key} must lie in [0, 1)")
    for key in ("end_time", "dt", "alpha_chi"):
        if getattr(cfg, key) < 0:
            bad(key, f"{key} must be >= 0")
    for key in ("k", "modes", "output_every"):
        if getattr(cfg, key) < 1:
            bad(key, f"{key} must be >= 1")
    if not cfg.chi_lo < cfg.chi_hi:
        bad("chi_hi", "chi_hi must exceed chi_lo")
    for key in ("identities", "residuals"):
        for name in getattr(cfg, key):
            if name not in IDENTITIES and not (key == "identities" and name == "all"):
                bad(key, f"unknown identity {name!r}")
    for name in cfg.residuals:
        if IDENTITIES[name].general != ModelKind.parse(cfg.model).general:
            bad("residuals", f"identity {name!r} does not apply to model {cfg.model}")
    if len(cfg.grids) < 2:
        bad("grids", "need at least two grids")
    for g0, g1 in zip(cfg.grids, cfg.grids[1:]):
        if g1 != 2 * g0:
            bad("grids", "each grid must double the previous one")
    if cfg.grids[0] < 8:
        bad("grids", "grids must have at least 8 cells")


def parse_config(text: str) -> Config:
    """Parse flat ``key = value`` text into a validated ``Config``.

    Raises:
        ConfigError: naming the line and key of an unknown key, a malformed
            value, a repeated key or a constraint violation.
    """
    values: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError("unknown key", line=lineno, key=key)
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", line=lineno, key=key)
        try:
            values[key] = _convert(key, value)
        except ValueError as exc:
            raise ConfigError(f"malformed value {value!r}: {exc}", line=lineno, key=key) from None
        lines[key] = lineno
    cfg = Config(**values)
    try:
        _validate(cfg)
    except ConfigError as exc:
        key = exc.key
        if key == "tau2" and "tau2" not in lines and "tau1" in lines:
            key = "tau1"
        raise ConfigError(exc.message, line=lines.get(key), key=key) from None
    return cfg


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: Config) -> str:
    """Render every key; ``parse_config(dump_config(c)) == c``."""
    out = ["# effective configuration"]
    for name in _FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, tuple) and not value:
            out.append(f"# {name} =")
            continue
        out.append(f"{name} = {_format(value)}")
    return "\n".join(out) + "\n"


def load_config(path: str | os.PathLike) -> Config:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}") from None
    return parse_config(text)


# --- subcommands ------------------------------------------------------------------


def _write(cfg: Config, name: str, text: str) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, name)
    fd.atomic_write_text(path, text)
    return path


def _state_fields(state: PrimState) -> dict:
    out = {"rho": state.rho, "theta": state.theta}
    for a in range(state.grid.dim):
        out[f"u{a}"] = state.u[a]
    if state.chi is not None:
        out["chi"] = state.chi
    return out


def _write_state(cfg: Config, prefix: str, state: PrimState) -> None:
    for name, f in _state_fields(state).items():
        _write(cfg, f"{prefix}_{name}.csv", fd.snapshot_csv(f, state.grid))


def _times_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "t"])
    for i, (t, _) in enumerate(traj.snapshots):
        w.writerow([i, repr(float(t))])
    return buf.getvalue()


def cmd_simulate(cfg: Config, out=sys.stdout) -> int:
    traj = simulate(cfg.scenario())
    _write(cfg, "diagnostics.csv", diagnostics_csv(traj, cfg.residuals))
    for i, (_, state) in enumerate(traj.snapshots):
        _write_state(cfg, f"snapshot_{i:05d}", state)
    _write(cfg, "snapshots.csv", _times_csv(traj))
    steps = len(traj.diagnostics) - 1
    print(f"model {cfg.kind.value}, n = {cfg.n}, steps = {steps}, t = {traj.times[-1]:.6g}", file=out)
    mass_scale = abs(traj.diagnostics[0]["mass"])
    energy_scale = abs(traj.diagnostics[0]["energy"])
    print(f"mass drift     {relative_drift(traj.column('mass')):.3e}", file=out)
    print(f"momentum drift {relative_drift(traj.column('momentum'), mass_scale):.3e}", file=out)
    print(f"energy drift   {relative_drift(traj.column('energy'), energy_scale):.3e}", file=out)
    ent = traj.column("entropy")
    print(f"entropy change {ent[-1] - ent[0]:.6e}  int sigma {traj.diagnostics[-1]['sigma_integral']:.6e}", file=out)
    if traj.aborted:
        _write_state(cfg, "failed_state", traj.failed_state)
        print(f"aborted at step {traj.failed_step}: {traj.aborted}", file=out)
        return EXIT_FAIL
    print(f"wrote {cfg.output_dir}", file=out)
    return EXIT_OK


def _studies(cfg: Config, names: Sequence[str]):
    params, grids, family = cfg.params(), cfg.study_grids(), cfg.family()
    return [identity_study(name, params, grids, family) for name in names]


def cmd_verify(cfg: Config, names: Sequence[str], out=sys.stdout) -> int:
    studies = _studies(cfg, names)
    verdicts = {s.name: study_passes(s, cfg.algebraic_tol, cfg.min_order) for s in studies}
    print(summary_table(studies, verdicts), file=out)
    _write(cfg, "verify.csv", reports_csv([r for s in studies for r in s.reports]))
    failed = [n for n, ok in verdicts.items() if not ok]
    print(f"{len(studies) - len(failed)}/{len(studies)} identities pass", file=out)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_converge(cfg: Config, names: Sequence[str], out=sys.stdout) -> int:
    studies = _studies(cfg, names)
    header = ["identity"] + [f"linf_{n}" for n in cfg.grids] + [f"order_{a}_{b}" for a, b in zip(cfg.grids, cfg.grids[1:])]
    rows = []
    for s in studies:
        orders = ["exact" if o == "exact" else f"{o:.4f}" for o in s.orders]
        rows.append([s.name] + [f"{r.linf:.6e}" for r in s.reports] + orders)
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) for i in range(len(header))]
    for r in [header] + rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)), file=out)
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows([header] + rows)
    _write(cfg, "converge.csv", buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twophase", description="Two-phase diffuse-interface flow simulator and identity verifier.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", help="run the configured scenario and write CSVs")
    p.add_argument("config")
    p = sub.add_parser("verify", help="check identities against their thresholds")
    p.add_argument("config")
    p.add_argument("--identity", action="append", help="identity name or 'all' (repeatable; default from config)")
    p = sub.add_parser("converge", help="print observed orders of the configured identities")
    p.add_argument("config")
    p.add_argument("--identity", action="append")
    p = sub.add_parser("dump-config", help="print the effective configuration")
    p.add_argument("config", nargs="?")
    return ap


def _identity_names(cfg: Config, requested) -> list[str]:
    if not requested:
        return cfg.identity_names()
    if "all" in requested:
        return list(IDENTITIES)
    unknown = [n for n in requested if n not in IDENTITIES]
    if unknown:
        raise UsageError(f"unknown identity {unknown[0]!r}; known: {', '.join(IDENTITIES)}")
    return list(requested)


def run_cli(argv: Sequence[str] | None = None, out=None) -> int:
    """Entry point; returns 0 on success, 1 on a failed check or aborted run, 2 on usage errors."""
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "dump-config":
            cfg = load_config(args.config) if args.config else Config()
            out.write(dump_config(cfg))
            return EXIT_OK
        cfg = load_config(args.config)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        names = _identity_names(cfg, args.identity)
        if args.command == "verify":
            return cmd_verify(cfg, names, out)
        return cmd_converge(cfg, names, out)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, SimulationBlowup, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


def main() -> None:
    sys.exit(run_cli())
