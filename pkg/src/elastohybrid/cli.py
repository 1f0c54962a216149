"""Command-line front end: ``elastohybrid {solve,convergence,locking,check}``.

Configuration precedence is defaults < config file < flags.  Every run writes
``report.csv``, ``report.md`` and ``run.json`` to the output directory; the
latter can be passed back through ``--config`` to repeat the run.
"""

import argparse
import dataclasses
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cases import case_convergence, case_locking
from .exceptions import ElastoHybridError, InvalidArgumentError
from .mesh import generate_mesh
from .recovery import default_family
from .solver import solve
from .studies import ConvergenceReport, _level_errors, convergence_study, locking_study

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
COMMANDS = ("solve", "convergence", "locking", "check")
METHODS = ("hdp", "ph", "ap")
FAMILIES = ("triangular", "square", "trapezoidal")
RECOVERIES = ("auto", "rt", "abf", "rt-on-quad", "none")
DEFAULT_N = {"solve": [8], "convergence": [8, 16, 32], "locking": [64], "check": []}
OUT_ENV = "ELASTOHYBRID_OUT"


@dataclass
class RunConfig:
    command: str = "convergence"
    method: str = "hdp"
    mesh: str = "triangular"
    r: int = 1
    n: list = None
    j: list = field(default_factory=lambda: list(range(2, 9)))
    case: str = "convergence"
    pressure: str = "unmapped"
    recovery: str = "auto"
    quadrature_degree_override: int = None
    out: str = None
    seed: int = 0
    delta: float = 0.25
    pattern: str = "congruent"
    lambda_rule: str = "printed"
    ap_form: str = "consistent"
    stress_samples: bool = False
    quick: bool = False

    def to_dict(self):
        return dataclasses.asdict(self)


FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def parse_int_list(text):
    """``"8,16,32"`` or the inclusive range ``"2..8"`` (or a mix of both)."""
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    if isinstance(text, int):
        return [text]
    out = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        if ".." in part:
            a, b = part.split("..", 1)
            a, b = int(a), int(b)
            if b < a:
                raise InvalidArgumentError(f"empty range {part!r}")
            out.extend(range(a, b + 1))
        else:
            out.append(int(part))
    return out


def _parse_bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise InvalidArgumentError(f"not a boolean: {v!r}")


def _coerce(key, value):
    if key not in FIELD_TYPES:
        raise InvalidArgumentError(f"unknown configuration key {key!r}")
    if value is None or (isinstance(value, str) and value.strip().lower() in ("", "none", "null")
                         and key in ("quadrature_degree_override", "out", "n")):
        return None
    try:
        if key in ("n", "j"):
            return parse_int_list(value)
        t = FIELD_TYPES[key]
        if t is bool:
            return _parse_bool(value)
        if t is int:
            return int(value)
        if t is float:
            return float(value)
        return str(value).strip()
    except ValueError as exc:
        raise InvalidArgumentError(f"bad value for {key!r}: {value!r} ({exc})") from exc


def read_config_file(path):
    """Flat ``key = value`` text (``#`` comments) or a ``run.json`` written by a previous run."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
        data = data.get("config", data)
        items = data.items()
    else:
        items = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidArgumentError(f"{path}:{lineno}: expected 'key = value'")
            k, v = line.split("=", 1)
            items.append((k.strip(), v.strip()))
    return {k.replace("-", "_"): _coerce(k.replace("-", "_"), v) for k, v in items}


def resolve_config(command, flags, config_path=None, env=None):
    env = os.environ if env is None else env
    values = {}
    if config_path:
        values.update(read_config_file(config_path))
    values.update({k: _coerce(k, v) for k, v in flags.items() if v is not None})
    values["command"] = command
    cfg = RunConfig(**values)
    if cfg.n is None:
        cfg.n = list(DEFAULT_N[command])
    if cfg.out is None:
        cfg.out = env.get(OUT_ENV) or "elastohybrid_out"
    return cfg


def _fail(rule, message):
    raise InvalidArgumentError(f"[{rule}] {message}")


def validate(cfg):
    """Reject inconsistent configurations, naming the violated rule."""
    if cfg.command not in COMMANDS:
        _fail("command", f"unknown command {cfg.command!r}")
    if cfg.command == "check":
        return cfg
    if cfg.method not in METHODS:
        _fail("method", f"method must be one of {METHODS}, got {cfg.method!r}")
    if cfg.mesh not in FAMILIES:
        _fail("mesh", f"mesh must be one of {FAMILIES}, got {cfg.mesh!r}")
    if cfg.method in ("hdp", "ph") and cfg.r < 1:
        _fail(f"{cfg.method}-r0", f"{cfg.method.upper()} requires r >= 1")
    if not 0 <= cfg.r <= 2:
        _fail("r-range", f"r must be 0..2 for AP and 1..2 otherwise, got {cfg.r}")
    if cfg.pressure not in ("mapped", "unmapped"):
        _fail("pressure", f"pressure must be 'mapped' or 'unmapped', got {cfg.pressure!r}")
    if cfg.recovery not in RECOVERIES:
        _fail("recovery", f"recovery must be one of {RECOVERIES}, got {cfg.recovery!r}")
    cell = "tri" if cfg.mesh == "triangular" else "quad"
    if cfg.recovery == "rt" and cell != "tri":
        _fail("recovery-cell", "rt recovery needs triangular meshes (use rt-on-quad for the quadrilateral variant)")
    if cfg.recovery in ("abf", "rt-on-quad") and cell != "quad":
        _fail("recovery-cell", f"{cfg.recovery} recovery needs quadrilateral meshes")
    if cfg.method == "ap" and cfg.recovery not in ("auto", "none"):
        _fail("ap-recovery", "stress recovery is not defined for the AP variant")
    if cfg.case not in ("convergence", "locking"):
        _fail("case", f"case must be 'convergence' or 'locking', got {cfg.case!r}")
    uses_mixed_bc = cfg.command != "locking" and cfg.case == "convergence"
    if cfg.method == "ap" and uses_mixed_bc:
        _fail("ap-neumann", "the AP variant needs a pure Dirichlet problem; use --case locking")
    if cfg.command != "locking" and cfg.case == "locking" and len(cfg.j) != 1:
        _fail("case-j", "a single --j value is required with --case locking")
    if any(not 2 <= j <= 8 for j in cfg.j):
        _fail("j-range", f"j must lie in 2..8, got {cfg.j}")
    if not cfg.n or any(n < 1 for n in cfg.n):
        _fail("n", f"n must be positive, got {cfg.n}")
    if cfg.command in ("solve", "locking") and len(cfg.n) != 1:
        _fail("n-single", f"{cfg.command} takes exactly one n, got {cfg.n}")
    if cfg.command == "convergence" and any(b != 2 * a for a, b in zip(cfg.n[:-1], cfg.n[1:])):
        _fail("n-doubling", f"convergence levels must double, got {cfg.n}")
    if cfg.mesh == "trapezoidal":
        if any(n % 2 for n in cfg.n):
            _fail("trapezoid-even-n", f"trapezoidal meshes need even n, got {cfg.n}")
        if not 0 <= cfg.delta < 0.5:
            _fail("trapezoid-delta", f"delta must lie in [0, 1/2), got {cfg.delta}")
        if cfg.pattern not in ("congruent", "checkerboard"):
            _fail("trapezoid-pattern", f"unknown pattern {cfg.pattern!r}")
    if cfg.quadrature_degree_override is not None and not 1 <= cfg.quadrature_degree_override <= 20:
        _fail("quadrature", "quadrature degree override must lie in 1..20")
    if cfg.lambda_rule not in ("printed", "derived"):
        _fail("lambda-rule", f"lambda_rule must be 'printed' or 'derived', got {cfg.lambda_rule!r}")
    if cfg.ap_form not in ("consistent", "literal"):
        _fail("ap-form", f"ap_form must be 'consistent' or 'literal', got {cfg.ap_form!r}")
    return cfg


def write_atomic(path, text):
    """Write via a temporary file in the same directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _mesh_options(cfg):
    return {"delta": cfg.delta, "pattern": cfg.pattern} if cfg.mesh == "trapezoidal" else {}


def _case(cfg):
    return case_locking(cfg.j[0], cfg.lambda_rule) if cfg.case == "locking" else case_convergence()


def _write_stress(out, stress):
    write_atomic(out / "stress_samples.csv", stress.samples_csv())
    write_atomic(out / "stress_coefficients.csv", stress.coefficients_csv())


def run_solve(cfg, out):
    case = _case(cfg)
    n = cfg.n[0]
    mesh = generate_mesh(cfg.mesh, n, case.domain, case.boundary, **_mesh_options(cfg))
    sol = solve(mesh, case, cfg.method, cfg.r, cfg.pressure, cfg.quadrature_degree_override, ap_form=cfg.ap_form)
    rec = cfg.recovery
    if rec == "auto":
        rec = "none" if cfg.method == "ap" else default_family(mesh.cell_type)
    errs, stress = _level_errors(sol, case, rec, cfg.ap_form)
    report = ConvergenceReport(f"{cfg.method.upper()} r={cfg.r} on {cfg.mesh} n={n} ({case.name})", [], [])
    report.add(n, mesh.diameters.max(), **errs)
    if cfg.stress_samples and stress is not None:
        _write_stress(out, stress)
    return report.to_csv(), report.to_markdown()


def run_convergence(cfg, out):
    report, _, stress = convergence_study(
        cfg.method, cfg.mesh, cfg.r, cfg.n, _case(cfg), cfg.pressure, cfg.recovery,
        cfg.quadrature_degree_override, _mesh_options(cfg), cfg.ap_form, keep_last=True,
    )
    if cfg.stress_samples and stress is not None:
        _write_stress(out, stress)
    return report.to_csv(), report.to_markdown()


def run_locking(cfg, out):
    report = locking_study(
        cfg.method, cfg.mesh, cfg.r, cfg.j, cfg.n[0], cfg.pressure, cfg.recovery,
        cfg.quadrature_degree_override, _mesh_options(cfg), cfg.lambda_rule, cfg.ap_form,
    )
    write_atomic(out / f"locking_{cfg.method}_{cfg.mesh}_r{cfg.r}.csv", report.plot_csv())
    return report.to_csv(), report.to_markdown()


def run_check(cfg, out):
    from .checks import run_all

    results = run_all(cfg.seed, quick=cfg.quick)
    lines = ["name,value,tolerance,passed"]
    md = ["### Property checks", "", "| check | value | tolerance | result |", "|---|---|---|---|"]
    for c in results:
        lines.append(f"\"{c.name}\",{c.value:.6e},{c.tol:.1e},{int(c.passed)}")
        md.append(f"| {c.name} | {c.value:.3e} | {c.tol:.1e} | {'PASS' if c.passed else 'FAIL'} |")
    failed = [c.name for c in results if not c.passed]
    return "\n".join(lines) + "\n", "\n".join(md) + "\n", failed


RUNNERS = {"solve": run_solve, "convergence": run_convergence, "locking": run_locking}


def run(cfg):
    """Execute a validated configuration; returns the exit status."""
    validate(cfg)
    out = Path(cfg.out)
    failed = []
    if cfg.command == "check":
        csv_text, md, failed = run_check(cfg, out)
    else:
        csv_text, md = RUNNERS[cfg.command](cfg, out)
    write_atomic(out / "report.csv", csv_text)
    write_atomic(out / "report.md", md)
    write_atomic(out / "run.json", json.dumps({"config": cfg.to_dict(), "version": __version__}, indent=2) + "\n")
    print(md, end="")
    if failed:
        print(f"{len(failed)} check(s) failed: " + "; ".join(failed), file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="elastohybrid", description="Hybrid finite elements for 2D elasticity.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value file or a previous run.json")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./elastohybrid_out)")
        p.add_argument("--seed", help="seed for randomized property checks")
        if name == "check":
            p.add_argument("--quick", action="store_const", const="true", help="recovery checks on one configuration")
            continue
        p.add_argument("--method", help="hdp | ph | ap")
        p.add_argument("--mesh", help="triangular | square | trapezoidal")
        p.add_argument("--r", help="polynomial index")
        p.add_argument("--n", help="subdivisions: single value, list 8,16,32 or range a..b")
        p.add_argument("--j", help="locking exponents, nu = 1/2 - 10^-j (list or range, e.g. 2..8)")
        p.add_argument("--case", help="convergence | locking (solve and convergence only)")
        p.add_argument("--pressure", help="unmapped | mapped")
        p.add_argument("--recovery", help="auto | rt | abf | rt-on-quad | none")
        p.add_argument("--quadrature-degree-override", dest="quadrature_degree_override")
        p.add_argument("--delta", help="trapezoid offset as a fraction of h")
        p.add_argument("--pattern", help="trapezoid pattern: congruent | checkerboard")
        p.add_argument("--lambda-rule", dest="lambda_rule", help="printed | derived")
        p.add_argument("--ap-form", dest="ap_form", help="consistent | literal")
        p.add_argument("--stress-samples", dest="stress_samples", action="store_const", const="true",
                       help="also write stress_samples.csv and stress_coefficients.csv")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = resolve_config(args.command, flags, args.config)
        return run(cfg)
    except (ValueError, OSError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ElastoHybridError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
