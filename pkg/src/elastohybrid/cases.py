"""Material law and manufactured test problems.

Equilibrium is written as ``div sigma = f`` with
``sigma = 2 mu eps(u) + lambda div(u) I``.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import InvalidArgumentError

pi = np.pi


@dataclass(frozen=True)
class Material:
    mu: float
    lam: float

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidArgumentError(f"shear modulus must be positive, got {self.mu}")
        if not self.lam >= 0:
            raise InvalidArgumentError(f"first Lame parameter must be non-negative, got {self.lam}")

    @classmethod
    def from_young_poisson(cls, E, nu):
        if not (E > 0 and -1 < nu < 0.5):
            raise InvalidArgumentError("need E > 0 and -1 < nu < 1/2")
        return cls(E / (2 * (1 + nu)), E * nu / ((1 + nu) * (1 - 2 * nu)))


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact fields and data of a test problem.

    ``u``, ``grad_u`` and ``f`` take points of shape (..., 2) and return
    (..., 2), (..., 2, 2) (derivative index last) and (..., 2).
    ``boundary`` maps an edge midpoint to 'D' or 'N'.
    """

    name: str
    material: Material
    domain: tuple
    boundary: Callable
    u: Callable
    grad_u: Callable
    f: Callable

    def div_u(self, x):
        g = self.grad_u(x)
        return g[..., 0, 0] + g[..., 1, 1]

    def p(self, x):
        return self.material.lam * self.div_u(x)

    def sigma(self, x):
        g = self.grad_u(x)
        eps = 0.5 * (g + np.swapaxes(g, -1, -2))
        return 2 * self.material.mu * eps + self.p(x)[..., None, None] * np.eye(2)

    def u_D(self, x):
        return self.u(x)

    def t_N(self, x, normal):
        return np.einsum("...ij,...j->...i", self.sigma(x), normal)


def _convergence_fields(mu, lam):
    def s_parts(x):
        X, Y = x[..., 0], x[..., 1]
        s = np.sin(pi * X) * np.sin(pi * Y)
        sx = pi * np.cos(pi * X) * np.sin(pi * Y)
        sy = pi * np.sin(pi * X) * np.cos(pi * Y)
        sxy = pi**2 * np.cos(pi * X) * np.cos(pi * Y)
        return s, sx, sy, sxy

    def u(x):
        s = s_parts(x)[0]
        return np.stack([s, s], axis=-1)

    def grad_u(x):
        _, sx, sy, _ = s_parts(x)
        row = np.stack([sx, sy], axis=-1)
        return np.stack([row, row], axis=-2)

    def f(x):
        s, _, _, sxy = s_parts(x)
        sxx = syy = -(pi**2) * s
        f1 = (2 * mu + lam) * sxx + (lam + mu) * sxy + mu * syy
        f2 = mu * sxx + (lam + mu) * sxy + (2 * mu + lam) * syy
        return np.stack([f1, f2], axis=-1)

    return u, grad_u, f


def case_convergence(mu=1.0, lam=0.3):
    """Smooth problem on (0,1)^2, Dirichlet on y in {0,1}, Neumann on x in {0,1}."""
    u, grad_u, f = _convergence_fields(mu, lam)

    def boundary(mid):
        return "D" if min(abs(mid[1]), abs(mid[1] - 1.0)) < 1e-12 else "N"

    return ManufacturedCase("convergence", Material(mu, lam), ((0.0, 1.0), (0.0, 1.0)), boundary, u, grad_u, f)


def locking_lambda(j, rule="printed"):
    """Lame parameter for nu = 1/2 - 10^-j with mu = 1.

    ``printed``: nu / (1 - 2 nu); ``derived``: 2 nu / (1 - 2 nu) from E = 2 (1 + nu).
    """
    nu = 0.5 - 10.0 ** (-j)
    if rule == "printed":
        return nu / (1 - 2 * nu)
    if rule == "derived":
        return 2 * nu / (1 - 2 * nu)
    raise InvalidArgumentError(f"lambda_rule must be 'printed' or 'derived', got {rule!r}")


def case_locking(j, lambda_rule="printed"):
    """Nearly incompressible pure Dirichlet problem on (-1,1)^2 with nu = 1/2 - 10^-j.

    The source is the analytic ``div sigma`` of the displacement field below
    (see :func:`locking_source_as_printed` for the literature variant).
    """
    if not (isinstance(j, (int, np.integer)) and 2 <= j <= 8):
        raise InvalidArgumentError(f"j must be an integer in [2, 8], got {j!r}")
    lam = locking_lambda(j, lambda_rule)
    mu = 1.0
    c = 1.0 / (1.0 + lam)

    def u(x):
        X, Y = x[..., 0], x[..., 1]
        s = np.sin(pi * X) * np.sin(pi * Y)
        u1 = np.sin(2 * pi * Y) * (np.cos(2 * pi * X) - 1) + c * s
        u2 = np.sin(2 * pi * X) * (1 - np.cos(2 * pi * Y)) + c * s
        return np.stack([u1, u2], axis=-1)

    def grad_u(x):
        X, Y = x[..., 0], x[..., 1]
        sx = pi * np.cos(pi * X) * np.sin(pi * Y)
        sy = pi * np.sin(pi * X) * np.cos(pi * Y)
        u1x = -2 * pi * np.sin(2 * pi * Y) * np.sin(2 * pi * X) + c * sx
        u1y = 2 * pi * np.cos(2 * pi * Y) * (np.cos(2 * pi * X) - 1) + c * sy
        u2x = 2 * pi * np.cos(2 * pi * X) * (1 - np.cos(2 * pi * Y)) + c * sx
        u2y = 2 * pi * np.sin(2 * pi * X) * np.sin(2 * pi * Y) + c * sy
        return np.stack([np.stack([u1x, u1y], -1), np.stack([u2x, u2y], -1)], -2)

    def f(x):
        # mu Lap(u) + (lambda + mu) grad div u, with div u = pi sin(pi(x+y)) / (1 + lambda).
        X, Y = x[..., 0], x[..., 1]
        s = np.sin(pi * X) * np.sin(pi * Y)
        cxy = np.cos(pi * (X + Y))
        g = (lam + mu) * c * pi**2 * cxy
        f1 = mu * (-4 * pi**2 * np.sin(2 * pi * Y) * (2 * np.cos(2 * pi * X) - 1) - 2 * pi**2 * c * s) + g
        f2 = mu * (-4 * pi**2 * np.sin(2 * pi * X) * (1 - 2 * np.cos(2 * pi * Y)) - 2 * pi**2 * c * s) + g
        return np.stack([f1, f2], axis=-1)

    return ManufacturedCase(
        f"locking-j{j}", Material(mu, lam), ((-1.0, 1.0), (-1.0, 1.0)), lambda mid: "D", u, grad_u, f
    )


def locking_source_as_printed(j, lambda_rule="printed"):
    """The locking source exactly as it appears in the literature statement of the problem."""
    lam = locking_lambda(j, lambda_rule)

    def f(x):
        X, Y = x[..., 0], x[..., 1]
        s = np.sin(pi * X) * np.sin(pi * Y)
        cxy = np.cos(pi * (X + Y))
        f1 = 4 * pi**2 * np.sin(2 * pi * Y) * (2 * np.cos(2 * pi * X) - 1) - cxy + 2 / (1 + lam) * s
        f2 = 4 * pi**2 * np.sin(2 * pi * X) * (1 - 2 * np.cos(2 * pi * Y)) - cxy + 2 / (1 + lam) * s
        return np.stack([f1, f2], axis=-1)

    return f


def _complex_step(fn, x, k, step):
    """Derivative of ``fn`` along axis ``k`` by the complex-step method.

    Free of subtractive cancellation, which matters for the large-lambda
    stresses of the locking problems.
    """
    x = np.asarray(x, dtype=complex)
    e = np.zeros(2)
    e[k] = step
    return np.imag(fn(x + 1j * e)) / step


def fd_div_sigma(case, x, step=1e-30):
    """Divergence of the exact stress at points (n, 2), independent of ``case.f``."""
    return sum(_complex_step(case.sigma, x, k, step)[..., :, k] for k in range(2))


def fd_grad_u(case, x, step=1e-30):
    return np.stack([_complex_step(case.u, x, k, step) for k in range(2)], axis=-1)


def consistency_residual(case, x, f=None, step=1e-30):
    """Relative mismatch between ``f`` (default: the case source) and ``div sigma``.

    Also checks ``grad_u`` against complex-step derivatives of ``u``; returns the
    larger of the two relative residuals.
    """
    f = case.f if f is None else f
    fx = f(x)
    dv = fd_div_sigma(case, x, step)
    scale = max(np.abs(dv).max(), 1.0)
    r1 = np.abs(fx - dv).max() / scale
    g = fd_grad_u(case, x, step)
    r2 = np.abs(case.grad_u(x) - g).max() / max(np.abs(g).max(), 1.0)
    return max(r1, r2)


def polynomial_case(degree, material=Material(1.0, 0.3), domain=((0.0, 1.0), (0.0, 1.0)), boundary=None, seed=0):
    """Random vector polynomial displacement of total degree ``degree`` (patch tests)."""
    rng = np.random.default_rng(seed)
    mono = [(a, d - a) for d in range(degree + 1) for a in range(d, -1, -1)]
    coef = rng.standard_normal((2, len(mono)))
    mu, lam = material.mu, material.lam

    def _d(x, a, b, dx, dy):
        X, Y = x[..., 0], x[..., 1]
        if a < dx or b < dy:
            return np.zeros_like(X)
        ca = np.prod(np.arange(a - dx + 1, a + 1)) if dx else 1
        cb = np.prod(np.arange(b - dy + 1, b + 1)) if dy else 1
        return ca * cb * X ** (a - dx) * Y ** (b - dy)

    def deriv(x, i, dx, dy):
        return sum(coef[i, k] * _d(x, a, b, dx, dy) for k, (a, b) in enumerate(mono))

    def u(x):
        return np.stack([deriv(x, 0, 0, 0), deriv(x, 1, 0, 0)], axis=-1)

    def grad_u(x):
        return np.stack(
            [np.stack([deriv(x, i, 1, 0), deriv(x, i, 0, 1)], axis=-1) for i in range(2)], axis=-2
        )

    def f(x):
        u1xx, u1yy, u1xy = deriv(x, 0, 2, 0), deriv(x, 0, 0, 2), deriv(x, 0, 1, 1)
        u2xx, u2yy, u2xy = deriv(x, 1, 2, 0), deriv(x, 1, 0, 2), deriv(x, 1, 1, 1)
        f1 = mu * (u1xx + u1yy) + (lam + mu) * (u1xx + u2xy)
        f2 = mu * (u2xx + u2yy) + (lam + mu) * (u1xy + u2yy)
        return np.stack([f1, f2], axis=-1)

    bnd = boundary if boundary is not None else (lambda mid: "D")
    return ManufacturedCase(f"poly{degree}", material, domain, bnd, u, grad_u, f)
