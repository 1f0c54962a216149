"""Convergence and locking studies with CSV/Markdown reporting."""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .cases import case_convergence, case_locking
from .errors import error_L2, error_multiplier, error_Xnorm, multiplier_flux, orders
from .exceptions import ElastoHybridError, InvalidArgumentError
from .mesh import generate_mesh
from .recovery import default_family, error_Hdiv, recover_stress
from .solver import solve

FIELDS = ("u", "m", "p", "sigma")
CSV_COLUMNS = ["n", "h", "err_u", "ord_u", "err_m", "ord_m", "err_p", "ord_p", "err_sigma", "ord_sigma"]


def _fmt(v, spec):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else format(v, spec)


@dataclass
class ConvergenceReport:
    """Errors per refinement level and observed orders between consecutive levels."""

    label: str
    n: list
    h: list
    errors: dict = field(default_factory=lambda: {k: [] for k in FIELDS + ("x",)})

    def add(self, n, h, **errs):
        self.n.append(int(n))
        self.h.append(float(h))
        for k in self.errors:
            self.errors[k].append(float(errs.get(k, np.nan)))

    def orders(self, key):
        if len(self.n) < 2:
            return []
        for a, b in zip(self.n[:-1], self.n[1:]):
            if b != 2 * a:
                raise InvalidArgumentError("orders are only defined for doubling levels")
        return list(orders(self.errors[key]))

    def rows(self):
        ords = {k: [math.nan] + self.orders(k) for k in FIELDS}
        for i, n in enumerate(self.n):
            row = {"n": n, "h": self.h[i]}
            for k in FIELDS:
                row[f"err_{k}"] = self.errors[k][i]
                row[f"ord_{k}"] = ords[k][i]
            yield row

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows():
            w.writerow(
                [row["n"], _fmt(row["h"], ".6e")]
                + [_fmt(row[c], ".6e" if c.startswith("err") else ".4f") for c in CSV_COLUMNS[2:]]
            )
        return buf.getvalue()

    def to_markdown(self):
        head = "| n | u-u_h (L2) | ord | m-m_h | ord | p-p_h (L2) | ord | sigma-sigma_h (Hdiv) | ord |"
        lines = [f"### {self.label}", "", head, "|" + "---|" * 9]
        for row in self.rows():
            cells = [str(row["n"])]
            for k in FIELDS:
                cells += [_fmt(row[f"err_{k}"], ".2e") or "-", _fmt(row[f"ord_{k}"], ".1f") or "-"]
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def _level_errors(sol, case, recovery, ap_form):
    errs = {
        "u": error_L2(sol, "u"),
        "m": error_multiplier(sol, sigma=multiplier_flux(case, sol.method, ap_form)),
        "x": error_Xnorm(sol),
    }
    if sol.spaces.n_p:
        errs["p"] = error_L2(sol, "p")
    stress = None
    if recovery != "none" and sol.method != "ap":
        stress = recover_stress(sol, recovery)
        errs["sigma"] = error_Hdiv(stress, case.sigma, case.f)
    return errs, stress


def _resolve_recovery(recovery, cell_type, method):
    if recovery is None or recovery == "auto":
        return "none" if method == "ap" else default_family(cell_type)
    return recovery


def convergence_study(method="hdp", mesh_family="triangular", r=1, n_list=(8, 16, 32), case=None,
                      pressure="unmapped", recovery=None, quad_degree=None, mesh_options=None,
                      ap_form="consistent", keep_last=False):
    """Solve on a sequence of doubling meshes and collect all error norms.

    Returns the report, plus the last solution and stress if ``keep_last``.
    """
    case = case or case_convergence()
    n_list = list(n_list)
    if any(b != 2 * a for a, b in zip(n_list[:-1], n_list[1:])):
        raise InvalidArgumentError(f"n-list must be strictly doubling, got {n_list}")
    label = f"{method.upper()} r={r} on {mesh_family} meshes ({pressure} pressure, recovery {recovery or 'auto'})"
    report = ConvergenceReport(label, [], [])
    last = (None, None)
    for n in n_list:
        try:
            mesh = generate_mesh(mesh_family, n, case.domain, case.boundary, **(mesh_options or {}))
            sol = solve(mesh, case, method, r, pressure, quad_degree, ap_form=ap_form)
            rec = _resolve_recovery(recovery, mesh.cell_type, method)
            errs, stress = _level_errors(sol, case, rec, ap_form)
        except ElastoHybridError as exc:
            raise type(exc)(f"level n={n}: {exc}") from exc
        report.add(n, mesh.diameters.max(), **errs)
        last = (sol, stress)
    return (report, *last) if keep_last else report


@dataclass
class LockingReport:
    label: str
    j: list
    errors: dict = field(default_factory=lambda: {k: [] for k in FIELDS})

    def add(self, j, **errs):
        self.j.append(int(j))
        for k in FIELDS:
            self.errors[k].append(float(errs.get(k, np.nan)))

    def fields(self):
        return [k for k in FIELDS if not np.all(np.isnan(self.errors[k]))]

    def flatness(self, key):
        e = np.asarray(self.errors[key])
        return float(e.max() / e.min())

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j"] + [f"err_{k}" for k in FIELDS])
        for i, j in enumerate(self.j):
            w.writerow([j] + [_fmt(self.errors[k][i], ".6e") for k in FIELDS])
        return buf.getvalue()

    def plot_csv(self):
        """``j`` against log2 of every available error field."""
        keys = self.fields()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j"] + [f"log2_err_{k}" for k in keys])
        for i, j in enumerate(self.j):
            w.writerow([j] + [format(math.log2(self.errors[k][i]), ".6f") for k in keys])
        return buf.getvalue()

    def to_markdown(self):
        keys = self.fields()
        lines = [f"### {self.label}", "", "| j | " + " | ".join(keys) + " |", "|" + "---|" * (len(keys) + 1)]
        for i, j in enumerate(self.j):
            lines.append(f"| {j} | " + " | ".join(format(self.errors[k][i], ".3e") for k in keys) + " |")
        return "\n".join(lines) + "\n"


def locking_study(method="hdp", mesh_family="triangular", r=1, j_list=range(2, 9), n=64,
                  pressure="unmapped", recovery=None, quad_degree=None, mesh_options=None,
                  lambda_rule="printed", ap_form="consistent"):
    """Errors as functions of ``j`` for ``nu = 1/2 - 10^-j`` on a fixed mesh."""
    label = f"{method.upper()} r={r} on {mesh_family} n={n}"
    report = LockingReport(label, [])
    mesh = None
    spaces = None
    for j in j_list:
        case = case_locking(j, lambda_rule)
        if mesh is None:
            mesh = generate_mesh(mesh_family, n, case.domain, case.boundary, **(mesh_options or {}))
        try:
            sol = solve(mesh, case, method, r, pressure, quad_degree, ap_form=ap_form, spaces=spaces)
            spaces = sol.spaces
            errs, _ = _level_errors(sol, case, _resolve_recovery(recovery, mesh.cell_type, method), ap_form)
        except ElastoHybridError as exc:
            raise type(exc)(f"j={j}: {exc}") from exc
        errs.pop("x", None)
        report.add(j, **errs)
    return report
