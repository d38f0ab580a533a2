"""Command-line driver: ``ferroflow run|convergence|export``.

Settings come from an optional flat ``key=value`` file (``--config``) and are
overridden by command-line flags.  Exit status is 0 on success, 1 when a
linear solve fails and 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

log = logging.getLogger("ferroflow")

HEAVY_N = 32
MODEL_KEYS = ("eta", "mu0", "sigma", "tau", "chi0", "beta")
ENERGY_COLUMNS = ["step", "t", "E", "F", "res_div_u", "res_flux", "res_mstat"]


class ConfigError(ValueError):
    pass


def _apply_thread_cap() -> None:
    # numpy/MKL read these once at import, so this runs before the heavy imports
    cap = os.environ.get("FERROFLOW_THREADS")
    if not cap:
        return
    if not cap.isdigit() or int(cap) < 1:
        raise ConfigError(f"FERROFLOW_THREADS must be a positive integer, got {cap!r}")
    for var in ("OMP_NUM_THREADS", "MKL_NUM_THREADS", "OPENBLAS_NUM_THREADS"):
        os.environ[var] = cap


@dataclass
class RunConfig:
    example: int = 1
    n: int = 4
    dt: float | None = None  # default 1/n
    T: float | None = None  # default: the example's final time
    M: int = 2
    out: str = "out"
    vtk: bool = False
    vtk_every: int = 0  # 0: final state only
    energy_csv: bool = True
    error_csv: bool = True
    heavy: bool = False
    seed: int = 0  # reserved for randomized checks; runs themselves are deterministic
    edge_bc: bool = False
    backend: str | None = None
    n_list: list[int] = field(default_factory=lambda: [4, 8])
    params: dict[str, float] = field(default_factory=dict)

    @property
    def time_step(self) -> float:
        return self.dt if self.dt is not None else 1.0 / self.n

    def validate(self) -> "RunConfig":
        if self.example not in (1, 2, 3):
            raise ConfigError(f"example must be 1, 2 or 3, got {self.example}")
        for n in [self.n, *self.n_list]:
            if n < 1:
                raise ConfigError(f"mesh size n must be at least 1, got {n}")
            if n >= HEAVY_N and not self.heavy:
                raise ConfigError(f"n = {n} needs --heavy (direct solves at this size take hours)")
        if self.M < 1:
            raise ConfigError("M must be at least 1")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        for key, value in self.params.items():
            if key not in MODEL_KEYS:
                raise ConfigError(f"unknown model parameter {key!r}")
            if not value > 0:
                raise ConfigError(f"model parameter {key} must be positive")
        return self


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def _coerce(key: str, raw: str):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    try:
        if key in MODEL_KEYS:
            return float(raw)
        kind = kinds[key]
    except KeyError:
        raise ConfigError(f"unknown configuration key {key!r}") from None
    except ValueError:
        raise ConfigError(f"{key}: {raw!r} is not a number") from None
    try:
        if kind == "bool":
            return _BOOL[raw.strip().lower()]
        if kind == "int":
            return int(raw)
        if kind == "float | None":
            return None if raw.strip().lower() in ("", "none") else _number(raw)
        if kind == "str | None":
            return raw.strip() or None
        if kind == "list[int]":
            return [int(v) for v in raw.replace(",", " ").split()]
        return raw.strip()
    except (KeyError, ValueError):
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def _number(raw: str) -> float:
    # accept 1/16 style fractions for dt and T
    raw = raw.strip()
    if "/" in raw:
        num, den = raw.split("/", 1)
        return float(num) / float(den)
    return float(raw)


def read_config(path: str | Path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, raw = (s.strip() for s in line.split("=", 1))
        values[key] = _coerce(key, raw)
    return values


def build_config(args: argparse.Namespace) -> RunConfig:
    settings = read_config(args.config) if args.config else {}
    params = {k: settings.pop(k) for k in list(settings) if k in MODEL_KEYS}
    flag_map = {"example": args.example, "dt": args.dt, "T": args.T, "M": args.M, "out": args.out,
                "seed": args.seed, "backend": args.backend}
    for key, value in flag_map.items():
        if value is not None:
            settings[key] = value
    if args.n:
        if args.command == "convergence":
            settings["n_list"] = list(args.n)
        settings["n"] = args.n[0]
    for flag in ("vtk", "heavy", "edge_bc"):
        if getattr(args, flag):
            settings[flag] = True
    if args.vtk_every is not None:
        settings["vtk_every"] = args.vtk_every
        settings["vtk"] = True
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        if key.strip() in MODEL_KEYS:
            params[key.strip()] = _coerce(key.strip(), raw)
        else:
            settings[key.strip()] = _coerce(key.strip(), raw)
    return replace(RunConfig(), params=params, **settings).validate()


# ---------------------------------------------------------------------------
# commands


def _problem(config: RunConfig):
    from . import mms
    from .params import ModelParams

    if config.example == 3:
        data = mms.example3(ModelParams().with_overrides(**config.params))
        exact = None
    else:
        exact = mms.EXAMPLES[config.example]()
        if config.params:
            exact = replace(exact, params=exact.params.with_overrides(**config.params))
        data = exact.problem()
    return data, exact


def _scheme(config: RunConfig, data, n: int, dt: float | None = None):
    from .params import SchemeParams

    T = config.T if config.T is not None else data.T
    try:
        return SchemeParams(data.params, dt if dt is not None else 1.0 / n, T, M=config.M)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _fmt(v) -> str:
    return str(v) if isinstance(v, int) else repr(float(v))


def write_energy_csv(path: Path, records) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ENERGY_COLUMNS)
        for r in records:
            w.writerow([_fmt(getattr(r, c)) for c in ENERGY_COLUMNS])


def write_errors_csv(path: Path, report) -> None:
    from .diagnostics import ErrorReport

    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ErrorReport.columns())
        w.writerow([_fmt(v) for v in report.as_array()])


def write_table_csv(path: Path, ns, reports, orders) -> None:
    from .diagnostics import ErrorReport

    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", *ErrorReport.columns()])
        for n, r in zip(ns, reports):
            w.writerow([n, *(_fmt(v) for v in r.as_array())])
        # orders between the last two levels, blank for a single level
        last = orders.pairwise[-1] if orders is not None else [""] * len(ErrorReport.columns())
        w.writerow(["order", *(_fmt(v) if v != "" else "" for v in last)])


def simulate(config: RunConfig, n: int, out: Path | None, dt: float | None = None):
    """One run on an n^3 mesh; writes VTK snapshots into ``out`` when enabled."""
    from .stepper import Discretization, run
    from .vtk import write_vtk

    data, exact = _problem(config)
    scheme = _scheme(config, data, n, dt)
    disc = Discretization.uniform(n, edge_bc=config.edge_bc)
    last = scheme.num_steps

    def snapshot(step, state, stepper):
        if out is None or not config.vtk:
            return
        every = config.vtk_every
        if step == last or (every and step % every == 0):
            write_vtk(out / f"state_{step:04d}.vtk", state, title=f"{data.label} n={n} step={step}")

    if config.backend is not None:
        from . import linsolve

        if config.backend not in linsolve.available_backends():
            raise ConfigError(f"linear solver backend {config.backend!r} is not available")
        linsolve.DEFAULT_BACKEND = config.backend
    result = run(disc, scheme, data, snapshot)
    return result, exact


def cmd_run(config: RunConfig) -> int:
    from .diagnostics import error_norms

    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    result, exact = simulate(config, config.n, out, config.dt)
    if config.energy_csv:
        write_energy_csv(out / "energy.csv", result.energies)
    if exact is not None and config.error_csv:
        report = error_norms(result.state, exact)
        write_errors_csv(out / "errors.csv", report)
        log.info("errors: %s", report)
    return 0


def cmd_convergence(config: RunConfig) -> int:
    from .diagnostics import convergence_orders, error_norms

    ns = list(config.n_list)
    if any(b != 2 * a for a, b in zip(ns, ns[1:])):
        raise ConfigError(f"n values {ns} must double from one level to the next")
    if config.example == 3:
        raise ConfigError("example 3 has no exact solution to measure errors against")
    if config.dt is not None:
        raise ConfigError("convergence uses dt = 1/n on every level; drop --dt")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for n in ns:
        level_dir = out / f"n{n}"
        level_dir.mkdir(exist_ok=True)
        result, exact = simulate(config, n, level_dir)
        write_energy_csv(level_dir / "energy.csv", result.energies)
        reports.append(error_norms(result.state, exact))
        write_errors_csv(level_dir / "errors.csv", reports[-1])
        log.info("n=%d: %s", n, reports[-1])
    orders = convergence_orders(reports, ns) if len(reports) > 1 else None
    write_table_csv(out / "table.csv", ns, reports, orders)
    return 0


def cmd_export(config: RunConfig) -> int:
    """Write the VTK file of the initial state, or of the state at ``T`` when given."""
    from .stepper import Discretization, Stepper
    from .vtk import write_vtk

    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    if config.T is None:
        data, _ = _problem(config)
        disc = Discretization.uniform(config.n, edge_bc=config.edge_bc)
        state = Stepper(disc, _scheme(replace(config, T=data.T), data, config.n), data).initial_state()
        step = 0
    else:
        result, _ = simulate(replace(config, vtk=False), config.n, None, config.dt)
        state, step = result.state, len(result.energies) - 1
    write_vtk(out / f"state_{step:04d}.vtk", state, title=f"example{config.example} n={config.n}")
    return 0


COMMANDS = {"run": cmd_run, "convergence": cmd_convergence, "export": cmd_export}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ferroflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value settings file")
        p.add_argument("--example", type=int)
        p.add_argument("--n", type=int, nargs="+", help="mesh size (several for convergence)")
        p.add_argument("--dt", type=_number)
        p.add_argument("--T", type=_number)
        p.add_argument("--M", type=int, help="quasi-Newton sweeps per step")
        p.add_argument("--out")
        p.add_argument("--vtk", action="store_true", help="write VTK of the final state")
        p.add_argument("--vtk-every", type=int, help="also write VTK every k steps")
        p.add_argument("--heavy", action="store_true", help="allow n >= 32")
        p.add_argument("--seed", type=int)
        p.add_argument("--edge-bc", action="store_true",
                       help="impose zero tangential trace on the edge space")
        p.add_argument("--backend", choices=["pardiso", "superlu"])
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key or model parameter")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        _apply_thread_cap()
        config = build_config(args)
        if args.command == "run" and args.n and len(args.n) > 1:
            raise ConfigError("run takes a single --n")
        from .linsolve import SolverError

        try:
            return COMMANDS[args.command](config)
        except SolverError as exc:
            print(f"ferroflow: solver failure: {exc}", file=sys.stderr)
            return 1
    except ConfigError as exc:
        print(f"ferroflow: configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
