"""Spectral checks, resolvent-norm growth on the imaginary axis and power-law fits."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from .assembly import FieldKind, Model
from .errors import DomainError, FitError, HypothesisError, NumericalError
from .operator import DiscreteOperator

DENSE_LIMIT = 600
EIG_LIMIT = 2000
R2_MIN = 0.98

# resolvent exponent ell and energy decay exponent 2/ell per model
TARGET_ELL = {
    Model.EBBW: lambda a: 1.0 - a / 2.0,
    Model.WW: lambda a: 1.0 - a / 2.0,
    Model.WEBB: lambda a: 3.0 - a,
    Model.EBB: lambda a: 1.0 - a,
    Model.EBBEBB: lambda a: 3.0 - a,
}


def target_ell(model: Model, alpha: float) -> float:
    return TARGET_ELL[Model(model)](alpha)


def target_decay(model: Model, alpha: float) -> float:
    """Energy decay exponent: E(t) <= C t^(-target)."""
    return 2.0 / target_ell(model, alpha)


# --------------------------------------------------------------------------
# spectrum


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    max_real: float

    @property
    def stable(self) -> bool:
        return self.max_real < 0


def eigenvalues(op: DiscreteOperator) -> np.ndarray:
    if op.dim > EIG_LIMIT:
        raise DomainError(
            f"state dimension {op.dim} exceeds {EIG_LIMIT} for a dense eigensolve; "
            "reduce n_left/n_right or n_xi"
        )
    return sla.eigvals(op.normalized())


def refine_eigenvalue(op: DiscreteOperator, sigma: complex, steps: int = 6) -> complex:
    """Inverse iteration on ``A x = sigma M x`` with the structured shifted solver.

    Returns the Rayleigh quotient ``x^H A x / x^H M x``. Its real part is
    ``-x^H Sym(A) x / x^H M x``, evaluated without cancellation, so it keeps
    the sign the dense eigensolver can lose when ``||A||`` is dominated by
    fast diffusive modes.
    """
    shift = complex(sigma) + 1e-10 * (1.0 + abs(sigma))
    solver = op.solver(shift)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(op.dim) + 1j * rng.standard_normal(op.dim)
    for _ in range(steps):
        x = solver.solve(op.M @ x)
        x /= np.linalg.norm(x)
    num = np.vdot(x, op.A @ x)
    den = np.vdot(x, op.M @ x).real
    re = -float(np.vdot(x, -0.5 * ((op.A + op.A.T) @ x)).real) / den
    return complex(re, num.imag / den)


def spectrum_check(op: DiscreteOperator, max_refine: int = 400) -> SpectrumReport:
    """Largest real part of the spectrum of ``M^-1 A``.

    A dense eigensolve locates the spectrum; rightmost eigenvalues are then
    polished by :func:`refine_eigenvalue` until the maximum is attained by a
    polished one.
    """
    ev = eigenvalues(op).copy()
    done = np.zeros(ev.size, bool)
    for _ in range(min(max_refine, ev.size)):
        k = int(np.argmax(ev.real))
        if done[k]:
            break
        ev[k] = refine_eigenvalue(op, ev[k])
        done[k] = True
    else:
        k = int(np.argmax(ev.real))
        if not done[k]:
            raise NumericalError(f"more than {max_refine} eigenvalues need polishing")
    return SpectrumReport(ev, float(ev.real.max()))


def undamped_frequencies(op: DiscreteOperator) -> np.ndarray:
    """Eigenfrequencies of the conservative part, ``K phi = f^2 M phi``."""
    f2 = sla.eigh(op.system.stiffness.toarray(), op.system.mass.toarray(), eigvals_only=True)
    return np.sqrt(np.clip(f2, 0.0, None))


def validity_window(op: DiscreteOperator) -> tuple[float, float]:
    """Frequency band ``[lambda_min, lambda_max]`` faithfully represented by the mesh.

    ``lambda_min`` is ten times the fundamental frequency; ``lambda_max`` maps
    the wavenumber ``pi / (10 h)`` of each side through its dispersion relation.
    """
    spec, mesh = op.spec, op.mesh
    sides = [(mesh.right, spec.right)]
    if spec.left is not None:
        sides.append((mesh.left, spec.left))
    bounds = []
    for side, layout in sides:
        k = math.pi / (10.0 * side.sizes.max())
        c = spec.coefficient(layout)
        bounds.append(math.sqrt(c) * k if layout.kind is FieldKind.WaveP1 else math.sqrt(c) * k * k)
    f1 = float(undamped_frequencies(op)[0])
    return 10.0 * f1, min(bounds)


# --------------------------------------------------------------------------
# resolvent norm


class _Resolvent:
    """Factorized ``i lam M - A`` with M-weighted norm estimation."""

    def __init__(self, op: DiscreteOperator, lam: float):
        self.op = op
        self.lam = lam
        try:
            self.fwd = op.solver(1j * lam)
            self.adj = op.solver(-1j * lam)
        except RuntimeError as exc:  # exactly singular factor
            raise NumericalError(f"i*lambda*M - A singular at lambda={lam}: {exc}") from exc

    def norm(self, tol: float = 1e-10) -> float:
        """Square root of the top eigenvalue of ``L^T S^-H M S^-1 L``."""
        op, n = self.op, self.op.dim

        def matvec(x):
            y = self.fwd.solve(op.apply_factor(x))
            z = self.adj.solve(op.M @ y, transpose=True)
            return op.apply_factor(z, transpose=True)

        H = spla.LinearOperator((n, n), matvec=matvec, dtype=complex)
        v0 = np.ones(n, dtype=complex)
        try:
            vals = spla.eigsh(H, k=1, which="LA", tol=tol, v0=v0, ncv=min(n - 1, 20), maxiter=5000,
                              return_eigenvectors=False)
        except spla.ArpackNoConvergence as exc:
            raise NumericalError(f"norm iteration did not converge at lambda={self.lam}: {exc}") from exc
        val = float(vals[0].real)
        if not np.isfinite(val):
            raise NumericalError(f"non-finite norm estimate at lambda={self.lam}")
        return math.sqrt(max(val, 0.0))


def resolvent_norm(op: DiscreteOperator, lam: float, *, dense: bool | None = None) -> float:
    """``||(i lam - M^-1 A)^-1||`` in the energy norm, i.e. ``1 / sigma_min``."""
    if not op.params.eta > 0:
        raise HypothesisError("resolvent analysis needs eta > 0")
    if dense is None:
        dense = op.dim <= DENSE_LIMIT
    if dense:
        B = 1j * lam * np.eye(op.dim) - op.normalized()
        smin = sla.svdvals(B)[-1]
        return math.inf if smin == 0 else 1.0 / smin
    try:
        return _Resolvent(op, lam).norm()
    except NumericalError:
        if op.dim <= EIG_LIMIT:
            return resolvent_norm(op, lam, dense=True)
        raise


def resolvent_apply(op: DiscreteOperator, lam: float, F: np.ndarray) -> np.ndarray:
    """``(i lam - M^-1 A)^-1 F`` computed as ``(i lam M - A)^-1 M F``."""
    S = (1j * lam * op.M - op.A).tocsc().astype(complex)
    return spla.spsolve(S, op.M @ F.astype(complex))


def m_norm(op: DiscreteOperator, x: np.ndarray) -> float:
    return float(math.sqrt(abs(np.vdot(x, op.M @ x))))


# --------------------------------------------------------------------------
# sweeps and fits


@dataclass
class ResolventSweep:
    lambdas: np.ndarray
    norms: np.ndarray
    meta: dict = field(default_factory=dict)
    peaks: np.ndarray | None = None  # lambda at which each bin supremum was found

    def to_csv(self) -> str:
        head = "".join(f"# {k}={v}\n" for k, v in self.meta.items())
        peaks = self.peaks if self.peaks is not None else self.lambdas
        rows = "".join(f"{a:.17g},{b:.17g},{c:.17g}\n" for a, b, c in zip(self.lambdas, self.norms, peaks))
        return head + "lambda,norm,peak\n" + rows

    @classmethod
    def from_csv(cls, text: str) -> "ResolventSweep":
        meta, rows = {}, []
        for line in text.splitlines():
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v.strip()
            elif line and not line.startswith("lambda"):
                rows.append([float(c) for c in line.split(",")])
        arr = np.array(rows, float).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], meta, arr[:, 2])


@dataclass
class DecayFit:
    exponent: float
    stderr: float
    window: tuple[float, float]
    r_squared: float
    n_points: int = 0

    @property
    def reliable(self) -> bool:
        return self.r_squared >= R2_MIN

    def report(self, **extra) -> str:
        """``key: value`` lines; the exponent is withheld when the fit is unreliable."""
        lines = {
            "exponent": f"{self.exponent:.6g}" if self.reliable else "unresolved",
            "raw_exponent": f"{self.exponent:.6g}",
            "stderr": f"{self.stderr:.3g}",
            "window": f"{self.window[0]:.6g} {self.window[1]:.6g}",
            "r_squared": f"{self.r_squared:.6f}",
            "n_points": str(self.n_points),
        }
        lines.update({k: str(v) for k, v in extra.items()})
        return "".join(f"{k}: {v}\n" for k, v in lines.items())


def loglog_fit(x, y) -> DecayFit:
    """Least-squares slope of ``log y`` against ``log x``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    x, y = x[ok], y[ok]
    if x.size < 3:
        raise FitError(f"only {x.size} usable points")
    lx, ly = np.log(x), np.log(y)
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = max(x.size - 2, 1)
    sxx = float(((lx - lx.mean()) ** 2).sum())
    stderr = math.sqrt(ss_res / dof / sxx) if sxx > 0 else math.inf
    return DecayFit(float(coef[0]), stderr, (float(x.min()), float(x.max())), r2, int(x.size))


def fit_power_law(lambdas, norms, min_points: int = 8) -> DecayFit:
    """Slope of ``log ||R||`` against ``log lambda``; needs ``min_points`` usable points."""
    lambdas, norms = np.asarray(lambdas, float), np.asarray(norms, float)
    usable = np.isfinite(norms) & (norms > 0) & (lambdas > 0)
    if usable.sum() < min_points:
        raise FitError(f"{int(usable.sum())} usable sweep points, need {min_points}")
    return loglog_fit(lambdas[usable], norms[usable])


def _near_axis_eigs(op: DiscreteOperator, center: float, k: int) -> np.ndarray:
    """Eigenvalues of ``A x = mu M x`` closest to ``i * center``."""
    sigma = 1j * center
    solver = op.solver(sigma)
    n = op.dim
    opinv = spla.LinearOperator((n, n), matvec=lambda x: -solver.solve(np.asarray(x, dtype=complex)), dtype=complex)
    k = min(k, n - 2)
    try:
        vals = spla.eigs(op.A.astype(complex), k=k, M=op.M.astype(complex), sigma=sigma, OPinv=opinv,
                         which="LM", return_eigenvectors=False, tol=1e-10, maxiter=300)
    except spla.ArpackNoConvergence as exc:
        vals = exc.eigenvalues
    return np.asarray(vals)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("FKVLAB_THREADS", "1")))
    except ValueError:
        return 1


def bin_supremum(op: DiscreteOperator, lo: float, hi: float, freqs: np.ndarray,
                 spectrum: np.ndarray | None = None) -> tuple[float, float]:
    """Supremum of the resolvent norm over ``[lo, hi]``.

    Candidate peaks are the imaginary parts of eigenvalues near the axis,
    taken from ``spectrum`` when given and otherwise found by shift-invert
    around each conservative eigenfrequency in the bin; the best candidate is
    then polished by a bounded scalar search.
    """
    if spectrum is None:
        inside = freqs[(freqs >= lo) & (freqs <= hi)]
        centers = list(inside) if inside.size else [math.sqrt(lo * hi)]
        near = np.concatenate([_near_axis_eigs(op, float(c), 3) for c in centers])
    else:
        near = np.asarray(spectrum)
    cands: set[float] = {lo, hi}
    widths: dict[float, float] = {}
    for ev in near:
        if lo <= ev.imag <= hi and ev.real < 0:
            key = round(float(ev.imag), 9)
            cands.add(key)
            widths[key] = max(widths.get(key, 0.0), -float(ev.real))
    cand = sorted(cands)
    vals = [resolvent_norm(op, lam) for lam in cand]
    best = int(np.argmax(vals))
    lam0, val0 = cand[best], vals[best]
    w = widths.get(lam0, 0.0)
    if w > 0:
        a, b = max(lo, lam0 - 2 * w), min(hi, lam0 + 2 * w)
        res = minimize_scalar(lambda t: -resolvent_norm(op, t), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-3 * w, "maxiter": 20})
        if -res.fun > val0:
            lam0, val0 = float(res.x), float(-res.fun)
    return lam0, val0


def resolvent_sweep(
    op: DiscreteOperator,
    lambda_range: tuple[float, float] | None = None,
    n_points: int = 10,
    *,
    envelope: bool = True,
) -> ResolventSweep:
    """Resolvent norms at log-spaced frequencies inside the validity window.

    With ``envelope=True`` each point is the supremum over a log-bin that
    holds at least one conservative eigenfrequency (the resonance envelope,
    which is what the growth bound constrains); bins without a resonance are
    dropped and counted in ``meta["empty_bins"]``. Otherwise the norm is
    sampled at the log-spaced points themselves.
    """
    window = validity_window(op)
    lo, hi = lambda_range if lambda_range is not None else window
    if not 0 < lo < hi:
        raise DomainError(f"bad lambda range ({lo}, {hi})")
    meta = {
        "model": op.spec.model.value, "alpha": op.params.alpha, "eta": op.params.eta,
        "n_left": op.mesh.n_left, "n_right": op.mesh.n_right, "n_xi": op.n_xi,
        "window_min": window[0], "window_max": window[1], "lambda_min": lo, "lambda_max": hi,
        "envelope": envelope, "dim": op.dim,
    }
    if not envelope:
        lams = np.geomspace(lo, hi, n_points)
        with ThreadPoolExecutor(_workers()) as ex:
            norms = np.array(list(ex.map(lambda t: resolvent_norm(op, t), lams)))
        return ResolventSweep(lams, norms, meta, lams.copy())
    edges = np.geomspace(lo, hi, n_points + 1)
    freqs = undamped_frequencies(op)
    # a bin without a resonance only samples an anti-resonance; it is dropped
    occupied = np.array([np.any((freqs >= a) & (freqs <= b)) for a, b in zip(edges[:-1], edges[1:])])
    meta["empty_bins"] = int(np.sum(~occupied))
    bins = [(a, b) for a, b, k in zip(edges[:-1], edges[1:], occupied) if k]
    spectrum = eigenvalues(op) if op.dim <= DENSE_LIMIT else None
    with ThreadPoolExecutor(_workers()) as ex:
        out = list(ex.map(lambda ab: bin_supremum(op, ab[0], ab[1], freqs, spectrum), bins))
    centers = np.array([math.sqrt(a * b) for a, b in bins])
    peaks = np.array([o[0] for o in out])
    norms = np.array([o[1] for o in out])
    return ResolventSweep(centers, norms, meta, peaks)


def sweep_and_fit(
    op: DiscreteOperator, lambda_range: tuple[float, float] | None = None, n_points: int = 10, **kw
) -> tuple[ResolventSweep, DecayFit]:
    """Sweep and fit the growth exponent ``ell``; predicted decay exponent is ``2/ell``."""
    sweep = resolvent_sweep(op, lambda_range, n_points, **kw)
    fit = fit_power_law(sweep.peaks if sweep.peaks is not None else sweep.lambdas, sweep.norms)
    return sweep, fit


def decay_fit(trace, tail_fraction: float = 0.5, n_log: int = 200) -> DecayFit:
    """Decay exponent ``-d log E / d log t`` over the final ``tail_fraction`` of
    log-thinned samples of an energy trace."""
    if not 0 < tail_fraction <= 1:
        raise DomainError("tail_fraction must lie in (0, 1]")
    t = np.asarray(trace.times, float)
    e = np.asarray(trace.energies, float)
    pos = t > 0
    t, e = t[pos], e[pos]
    if t.size < 3:
        raise FitError("trace too short for a decay fit")
    targets = np.geomspace(t[0], t[-1], n_log)
    idx = np.unique(np.clip(np.searchsorted(t, targets), 0, t.size - 1))
    idx = idx[-max(3, int(math.ceil(tail_fraction * idx.size))):]
    if np.any(~(e[idx] > 0)) or np.any(~np.isfinite(e[idx])):
        raise FitError("energy underflow or non-positive tail")
    fit = loglog_fit(t[idx], e[idx])
    return DecayFit(-fit.exponent, fit.stderr, fit.window, fit.r_squared, fit.n_points)


@dataclass
class TwoMeshFit:
    """Exponent fits on two meshes and their agreement."""

    coarse: DecayFit
    fine: DecayFit
    sweeps: tuple[ResolventSweep, ResolventSweep]
    tolerance: float

    @property
    def agree(self) -> bool:
        return abs(self.coarse.exponent - self.fine.exponent) <= self.tolerance

    @property
    def exponent(self) -> float:
        return self.fine.exponent


def two_mesh_fit(ops: tuple[DiscreteOperator, DiscreteOperator], lambda_range, n_points=10,
                 tolerance: float = 0.2) -> TwoMeshFit:
    """Fit the same lambda band on a coarse and a fine operator."""
    s1, f1 = sweep_and_fit(ops[0], lambda_range, n_points)
    s2, f2 = sweep_and_fit(ops[1], lambda_range, n_points)
    return TwoMeshFit(f1, f2, (s1, s2), tolerance)
