"""Fractional-order constants, the diffusive kernel and its xi-axis quadrature.

The tempered Caputo derivative of order ``alpha`` with shift ``eta`` is realized
through an auxiliary field ``omega(xi)`` obeying

    omega_t + (xi**2 + eta) * omega = mu(xi) * input,
    output = kappa(alpha) * int_R mu(xi) * omega(xi) dxi,

with ``mu(xi) = |xi|**((2*alpha - 1) / 2)``.  Everything here is even in ``xi``,
so integrals over the real line are evaluated as twice the half-line sum.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import DomainError, ResolutionError

DEFAULT_QUAD_TOL = 1e-6


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha={alpha!r} violates 0 < alpha < 1")


def _check_eta(eta: float, *, strict: bool = False) -> None:
    if strict and not eta > 0.0:
        raise DomainError(f"eta={eta!r} violates eta > 0")
    if not eta >= 0.0:
        raise DomainError(f"eta={eta!r} violates eta >= 0")


def kappa(alpha: float) -> float:
    """Normalizer ``sin(alpha*pi)/pi`` of the diffusive output."""
    _check_alpha(alpha)
    return math.sin(alpha * math.pi) / math.pi


def mu(xi, alpha: float):
    """Diffusive weight ``|xi|**((2*alpha - 1)/2)``; callers never pass ``xi = 0``."""
    _check_alpha(alpha)
    return np.abs(xi) ** ((2.0 * alpha - 1.0) / 2.0)


@dataclass(frozen=True)
class FractionalParams:
    """Order ``alpha`` and exponential shift ``eta`` of the damping law."""

    alpha: float
    eta: float = 1.0

    def __post_init__(self):
        _check_alpha(self.alpha)
        _check_eta(self.eta)

    @property
    def kappa(self) -> float:
        return kappa(self.alpha)


# --------------------------------------------------------------------------
# closed forms


def closed_I1(eta: float, alpha: float) -> float:
    """``kappa * int_R |xi|^(2a-1) / (1 + xi^2 + eta) dxi = (1 + eta)^(a-1)``."""
    _check_alpha(alpha)
    _check_eta(eta)
    return (1.0 + eta) ** (alpha - 1.0)


def closed_I15(eta: float, alpha: float) -> float:
    """``int_R |xi|^(2a-1) / (xi^2 + eta) dxi = eta^(a-1) / kappa``."""
    _check_alpha(alpha)
    _check_eta(eta, strict=True)
    return eta ** (alpha - 1.0) / kappa(alpha)


@functools.lru_cache(maxsize=None)
def c1_constant(alpha: float) -> float:
    """``int_1^inf (y-1)^(a/2 - 1/4) / y^2 dy`` by adaptive Gauss-Kronrod.

    The algebraic endpoint singularity on ``[1, 2]`` is handled by QUADPACK's
    algebraic weight, the tail ``[2, inf)`` by its infinite-range rule.
    Cached per ``alpha``; concurrent first calls compute the same value.
    """
    _check_alpha(alpha)
    p = alpha / 2.0 - 0.25
    head, _ = integrate.quad(
        lambda y: 1.0 / y**2, 1.0, 2.0, weight="alg", wvar=(p, 0.0),
        epsabs=0.0, epsrel=1e-12,
    )
    tail, _ = integrate.quad(
        lambda y: (y - 1.0) ** p / y**2, 2.0, np.inf, epsabs=0.0, epsrel=1e-12,
    )
    return head + tail


def _shifted(lam: float, eta: float) -> float:
    _check_eta(eta, strict=True)
    return abs(lam) + eta


def closed_I12(lam: float, eta: float, alpha: float) -> float:
    """``int_R |xi|^(a + 1/2) / (|lam| + xi^2 + eta)^2 dxi = c1 (|lam|+eta)^(a/2 - 5/4)``."""
    s = _shifted(lam, eta)
    return c1_constant(alpha) * s ** (alpha / 2.0 - 1.25)


def closed_I13(lam: float, eta: float) -> float:
    s = _shifted(lam, eta)
    return math.sqrt(math.pi / 2.0) * s**-0.75


def closed_I14(lam: float, eta: float) -> float:
    s = _shifted(lam, eta)
    return math.sqrt(math.pi) / 4.0 * s**-1.25


# --------------------------------------------------------------------------
# integral catalogue


class IntegralTag(enum.Enum):
    I1 = "I1"
    I2 = "I2"
    I3 = "I3"
    I7 = "I7"
    I8 = "I8"
    I11 = "I11"
    I12 = "I12"  # |lam| + xi^2 + eta form, closed form available
    I12L = "I12L"  # lam^2 + (xi^2 + eta)^2 form
    I13 = "I13"
    I14 = "I14"
    I15 = "I15"


_HALF_LINE = {IntegralTag.I3}
_SQRT_OF = {IntegralTag.I13, IntegralTag.I14}
_NEEDS_LAMBDA = {
    IntegralTag.I7, IntegralTag.I8, IntegralTag.I11, IntegralTag.I12L,
    IntegralTag.I12, IntegralTag.I13, IntegralTag.I14,
}
_NEEDS_ALPHA = set(IntegralTag) - {IntegralTag.I13, IntegralTag.I14}


@dataclass(frozen=True)
class IntegralId:
    """One member of the kernel-integral family together with its parameters."""

    tag: IntegralTag
    lam: float = 0.0
    eta: float = 0.0
    alpha: float = 0.5

    def __post_init__(self):
        if not isinstance(self.tag, IntegralTag):
            object.__setattr__(self, "tag", IntegralTag(self.tag))
        self.validate()

    def validate(self) -> None:
        tag, lam, eta = self.tag, self.lam, self.eta
        if tag in _NEEDS_ALPHA:
            _check_alpha(self.alpha)
        _check_eta(eta)
        if tag in (IntegralTag.I12, IntegralTag.I13, IntegralTag.I14, IntegralTag.I15):
            _check_eta(eta, strict=True)
        elif tag in _NEEDS_LAMBDA and eta == 0.0 and lam == 0.0:
            raise DomainError(f"{tag.value} needs eta > 0 or lam != 0")
        if tag not in _NEEDS_LAMBDA and lam != 0.0:
            raise DomainError(f"{tag.value} takes no lambda argument")

    def integrand(self, xi):
        """Even integrand in ``xi`` (the part under the integral sign)."""
        a, lam, eta = self.alpha, self.lam, self.eta
        x = np.abs(np.asarray(xi, dtype=float))
        t = self.tag
        if t is IntegralTag.I1:
            return kappa(a) * x ** (2 * a - 1) / (1 + x**2 + eta)
        if t is IntegralTag.I2:
            return x ** (2 * a - 1) / (1 + x**2 + eta) ** 2
        if t is IntegralTag.I3:
            return x ** (2 * a + 1) / (1 + x**2 + eta) ** 2
        if t is IntegralTag.I7:
            return kappa(a) * x ** (2 * a - 1) / (lam**2 + (x**2 + eta) ** 2)
        if t is IntegralTag.I8:
            return kappa(a) * x ** (2 * a - 1) * (x**2 + eta) / (lam**2 + (x**2 + eta) ** 2)
        if t is IntegralTag.I11:
            return x ** (2 * a - 1) / np.sqrt(lam**2 + (x**2 + eta) ** 2)
        if t is IntegralTag.I12L:
            return x ** (2 * a + 1) / (lam**2 + (x**2 + eta) ** 2)
        if t is IntegralTag.I12:
            return x ** (a + 0.5) / (abs(lam) + x**2 + eta) ** 2
        if t is IntegralTag.I13:
            return 1.0 / (abs(lam) + x**2 + eta) ** 2
        if t is IntegralTag.I14:
            return x**2 / (abs(lam) + x**2 + eta) ** 4
        if t is IntegralTag.I15:
            return x ** (2 * a - 1) / (x**2 + eta)
        raise DomainError(f"unknown integral tag {t!r}")

    def finish(self, raw: float) -> float:
        """Map the raw xi-integral to the integral's value (square root for I13/I14)."""
        return math.sqrt(raw) if self.tag in _SQRT_OF else raw

    @property
    def half_line(self) -> bool:
        return self.tag in _HALF_LINE


# --------------------------------------------------------------------------
# xi grid


@dataclass(frozen=True)
class XiGrid:
    """Log-uniform midpoint quadrature of the half line ``(0, xi_max)``.

    ``int_R f = 2 * sum(w * f(nodes))`` for even ``f``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    xi_max: float
    probe_error: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.ndim != 1 or nodes.shape != weights.shape or nodes.size < 2:
            raise DomainError("xi grid needs >= 2 nodes and matching weights")
        if nodes[0] <= 0 or np.any(np.diff(nodes) <= 0) or nodes[-1] > self.xi_max:
            raise DomainError("xi nodes must be positive, increasing and <= xi_max")
        if np.any(weights <= 0):
            raise DomainError("xi weights must be positive")

    @property
    def count(self) -> int:
        return self.nodes.size

    def integrate_even(self, f) -> float:
        """``int_R f(xi) dxi`` for an even integrand."""
        return 2.0 * float(np.dot(self.weights, f(self.nodes)))

    def to_csv(self) -> str:
        lines = ["node,weight"]
        lines += [f"{x:.17g},{w:.17g}" for x, w in zip(self.nodes, self.weights)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "XiGrid":
        rows = [ln for ln in text.strip().splitlines()[1:] if ln.strip()]
        data = np.array([[float(v) for v in ln.split(",")] for ln in rows])
        return cls(data[:, 0], data[:, 1], xi_max=float(data[-1, 0]) * 1.0000001)


def quad_integral(integral: IntegralId, grid: XiGrid) -> float:
    """Evaluate a catalogue integral with the xi-grid quadrature."""
    integral.validate()
    raw = float(np.dot(grid.weights, integral.integrand(grid.nodes)))
    if not integral.half_line:
        raw *= 2.0
    return integral.finish(raw)


def probe_error(grid: XiGrid, params: FractionalParams) -> float:
    """Relative error of the grid on the I1 probe integral."""
    exact = closed_I1(params.eta, params.alpha)
    approx = quad_integral(IntegralId(IntegralTag.I1, eta=params.eta, alpha=params.alpha), grid)
    return abs(approx - exact) / exact


def default_xi_range(params: FractionalParams, quad_tol: float = DEFAULT_QUAD_TOL) -> tuple[float, float]:
    """Truncation bounds putting each I1-probe tail below ``quad_tol / 10``.

    For ``eta > 0`` the lower bound is also pushed below the analytic
    origin tails of I15 and of the squared I13 integrand, so the closed forms
    of the catalogue are reproduced on the same grid.
    """
    a, eta, k = params.alpha, params.eta, params.kappa
    budget = quad_tol / 10.0 * closed_I1(eta, a)
    # 2k int_0^x s^(2a-1)/(1+eta) ds = k x^(2a) / (a (1+eta))
    lo = (budget * a * (1.0 + eta) / k) ** (1.0 / (2.0 * a))
    # 2k int_X^inf s^(2a-3) ds = k X^(2a-2) / (1-a)
    hi = (budget * (1.0 - a) / k) ** (1.0 / (2.0 * a - 2.0))
    lo = min(lo, 1e-6 * (1.0 + eta))
    if eta > 0:
        # I15: int_0^x s^(2a-1)/eta * 2 = x^(2a) / (a eta) against eta^(a-1) / kappa
        lo = min(lo, (quad_tol / 10.0 * a * eta**a / k) ** (1.0 / (2.0 * a)))
        # I13 squared: 2 x / s^2 against pi / (2 s^1.5), worst case s = eta
        lo = min(lo, quad_tol / 10.0 * math.pi / 4.0 * math.sqrt(eta))
    hi = max(hi, 10.0 * math.sqrt(1.0 + eta))
    return lo, hi


def build_xi_grid(
    params: FractionalParams,
    n_xi: int,
    xi_max: float | None = None,
    quad_tol: float = DEFAULT_QUAD_TOL,
    xi_min: float | None = None,
) -> XiGrid:
    """Geometric grid with composite-midpoint weights in ``log(xi)``.

    Raises :class:`ResolutionError` when the I1 probe misses ``quad_tol``.
    """
    if n_xi < 2:
        raise ResolutionError(f"n_xi={n_xi} < 2 cannot meet quad_tol={quad_tol:g}", float("inf"))
    lo, hi = default_xi_range(params, quad_tol)
    if xi_max is not None:
        if not xi_max > 1.0:
            raise DomainError(f"xi_max={xi_max!r} must exceed 1")
        hi = float(xi_max)
    if xi_min is not None:
        lo = float(xi_min)
    edges = np.linspace(math.log(lo), math.log(hi), n_xi + 1)
    ds = edges[1] - edges[0]
    nodes = np.exp(0.5 * (edges[:-1] + edges[1:]))
    weights = nodes * ds
    grid = XiGrid(nodes, weights, xi_max=hi)
    err = probe_error(grid, params)
    if not err <= quad_tol:
        raise ResolutionError(
            f"xi grid with n_xi={n_xi} reaches relative I1 error {err:.3e} > quad_tol={quad_tol:g}",
            err,
        )
    object.__setattr__(grid, "probe_error", err)
    return grid


def smallest_grid(params: FractionalParams, quad_tol: float, n_max: int = 4096) -> XiGrid:
    """Coarsest default-range grid that satisfies ``quad_tol`` (bisection on n_xi)."""
    lo, hi = 2, 8
    while True:
        try:
            build_xi_grid(params, hi, quad_tol=quad_tol)
            break
        except ResolutionError:
            lo, hi = hi, hi * 2
            if hi > n_max:
                raise
    while hi - lo > 1:
        mid = (lo + hi) // 2
        try:
            build_xi_grid(params, mid, quad_tol=quad_tol)
            hi = mid
        except ResolutionError:
            lo = mid
    return build_xi_grid(params, hi, quad_tol=quad_tol)
