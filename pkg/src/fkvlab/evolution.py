"""Implicit-midpoint time stepping, energy traces and initial data."""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .assembly import Model
from .errors import DomainError, NumericalError
from .kernel import FractionalParams, XiGrid, mu
from .operator import DiscreteOperator, StateVector, dissipation, energy

ENERGY_SLACK = 1e-12


@dataclass
class EnergyTrace:
    """Sampled energy and dissipation rate of one run.

    ``dissipated`` holds the exact cumulative midpoint dissipation
    ``sum dt * dissipation(x_{n+1/2})``, which matches the energy drop to
    round-off; ``dissipations`` are pointwise rates at the sample times.
    """

    times: np.ndarray
    energies: np.ndarray
    dissipations: np.ndarray
    meta: dict = field(default_factory=dict)
    dissipated: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.energies = np.asarray(self.energies, float)
        self.dissipations = np.asarray(self.dissipations, float)
        if not self.times.size == self.energies.size == self.dissipations.size:
            raise DomainError("trace columns have different lengths")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise DomainError("trace times must increase")

    def __len__(self) -> int:
        return self.times.size

    def monotone(self, slack: float = ENERGY_SLACK) -> bool:
        e = self.energies
        return bool(np.all(e[1:] <= e[:-1] * (1.0 + slack) + 1e-300))

    def balance_residual(self) -> float:
        """``|E(0) - E(T) - int dissipation dt| / E(0)`` with the trapezoid rule on the samples."""
        e0 = self.energies[0]
        if e0 == 0:
            return 0.0
        integral = float(np.trapezoid(self.dissipations, self.times))
        return abs(e0 - self.energies[-1] - integral) / e0

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in self.meta.items():
            buf.write(f"# {k}={v}\n")
        buf.write("t,E,dissipation\n")
        for t, e, d in zip(self.times, self.energies, self.dissipations):
            buf.write(f"{t:.17g},{e:.17g},{d:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EnergyTrace":
        meta, rows = {}, []
        for line in text.splitlines():
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v.strip()
            elif line and not line.startswith("t,"):
                rows.append([float(c) for c in line.split(",")])
        arr = np.array(rows, float).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], meta)


class MidpointStepper:
    """Reusable factorization of ``M - dt/2 A``.

    Scaling by ``2/dt`` turns the step into ``(s M - A) x+ = (s M + A) x`` with
    ``s = 2/dt``, which the shifted solver of the operator handles directly.
    """

    def __init__(self, op: DiscreteOperator, dt: float):
        if not dt > 0:
            raise DomainError(f"dt={dt} violates dt > 0")
        self.op = op
        self.dt = float(dt)
        self.s = 2.0 / self.dt
        try:
            self.solver = op.solver(self.s)
        except RuntimeError as exc:
            raise NumericalError(f"M - dt/2 A is singular for dt={dt}: {exc}") from exc

    def step(self, x: np.ndarray) -> np.ndarray:
        op = self.op
        rhs = self.s * (op.M @ x) + op.A @ x
        out = self.solver.solve(rhs)
        if not np.all(np.isfinite(out)):
            raise NumericalError("non-finite state after midpoint step")
        return out


def step_midpoint(op: DiscreteOperator, x, dt: float) -> StateVector:
    """One implicit-midpoint step ``(M - dt/2 A) x+ = (M + dt/2 A) x``."""
    return op.unflatten(MidpointStepper(op, dt).step(op.as_flat(x)))


def simulate(op: DiscreteOperator, x0, T: float, dt: float, sample_every: int = 1) -> EnergyTrace:
    """Integrate from ``x0`` (with zero ``omega``) to ``T`` and record the energy."""
    if not T > 0:
        raise DomainError(f"T={T} violates T > 0")
    if sample_every < 1:
        raise DomainError("sample_every must be >= 1")
    x = np.array(op.as_flat(x0), float)
    if np.any(x[op.blocks["omega"]] != 0):
        raise DomainError("initial omega must vanish")
    n_steps = int(round(T / dt))
    if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * T:
        raise DomainError(f"T={T} is not a whole number of steps dt={dt}")
    stepper = MidpointStepper(op, dt)
    times, ens, dis, cum = [0.0], [energy(op, x)], [dissipation(op, x)], [0.0]
    acc = 0.0
    for n in range(1, n_steps + 1):
        xn = stepper.step(x)
        acc += dt * dissipation(op, 0.5 * (x + xn))
        x = xn
        if n % sample_every == 0 or n == n_steps:
            times.append(n * dt)
            ens.append(energy(op, x))
            dis.append(dissipation(op, x))
            cum.append(acc)
    meta = {
        "dt": dt, "T": T, "model": op.spec.model.value, "alpha": op.params.alpha, "eta": op.params.eta,
        "n_left": op.mesh.n_left, "n_right": op.mesh.n_right, "n_xi": op.n_xi,
    }
    return EnergyTrace(np.array(times), np.array(ens), np.array(dis), meta, np.array(cum))


# --------------------------------------------------------------------------
# initial data


class Profile(enum.Enum):
    SMOOTH_BUMP = "smooth-bump"
    LOW_MODE = "low-mode"
    RANDOM_SMOOTH = "random-smooth"


def _support(op: DiscreteOperator) -> tuple[float, float]:
    L = op.spec.L
    return (0.0, L) if op.spec.model is Model.EBB else (-L, L)


def _interpolate(op: DiscreteOperator, f, df) -> np.ndarray:
    """Nodal values (and slopes on beam unknowns) of a smooth function."""
    q = np.empty(op.n_disp)
    for i, d in enumerate(op.system.dofs):
        q[i] = f(d.x) if d.component == 0 else df(d.x)
    return q


def _sine_pair(k: int, xa: float, xb: float):
    """``sin(k th) sin(th)`` with ``th = pi (x - xa) / (xb - xa)``; value and slope vanish at both ends."""
    c = math.pi / (xb - xa)

    def f(x):
        th = c * (x - xa)
        return math.sin(k * th) * math.sin(th)

    def df(x):
        th = c * (x - xa)
        return c * (k * math.cos(k * th) * math.sin(th) + math.sin(k * th) * math.cos(th))

    return f, df


def make_initial_data(op: DiscreteOperator, profile: str | Profile = Profile.SMOOTH_BUMP, seed: int = 0,
                      n_modes: int = 4) -> StateVector:
    """Compatible displacement with zero velocity and zero ``omega``.

    Every profile is built from functions whose value and slope vanish at the
    ends of the support, so the clamps hold exactly; the junction value is a
    single shared unknown, so continuity holds by construction.
    """
    profile = Profile(profile)
    xa, xb = _support(op)
    if profile is Profile.SMOOTH_BUMP:
        q = _interpolate(op, *_sine_pair(1, xa, xb))
    elif profile is Profile.RANDOM_SMOOTH:
        rng = np.random.default_rng(seed)
        q = np.zeros(op.n_disp)
        for k in range(1, 9):
            q += rng.standard_normal() / k**2 * _interpolate(op, *_sine_pair(k, xa, xb))
    else:
        K, Mm = op.system.stiffness.toarray(), op.system.mass.toarray()
        n_modes = min(n_modes, op.n_disp)
        _, vec = sla.eigh(K, Mm, subset_by_index=[0, n_modes - 1])
        vec = vec * np.sign(vec[np.argmax(np.abs(vec), axis=0), np.arange(n_modes)])
        q = vec.sum(axis=1)
    s = op.zeros()
    s.q = q
    return s


# --------------------------------------------------------------------------
# scalar surrogate of the diffusive realization


def chirp(t, periods: float = 10.0, T: float = 10.0, ratio: float = 3.0):
    """Linear chirp on ``[0, T]`` from ``f0`` to ``ratio * f0`` with ``periods`` full cycles."""
    f0 = 2.0 * periods / (T * (1.0 + ratio))
    f1 = ratio * f0
    t = np.asarray(t, float)
    return np.sin(2.0 * math.pi * (f0 * t + 0.5 * (f1 - f0) * t * t / T))


def diffusive_response(signal: np.ndarray, t: np.ndarray, grid: XiGrid, params: FractionalParams) -> np.ndarray:
    """Output ``kappa int mu omega dxi`` of ``omega' = -(xi^2 + eta) omega + mu V``, ``omega(0) = 0``.

    ``V`` is the piecewise-linear interpolant of ``signal``; each ``omega_k``
    is advanced with the exact exponential integral over every interval.
    """
    t = np.asarray(t, float)
    v = np.asarray(signal, float)
    g = grid.nodes**2 + params.eta
    m = mu(grid.nodes, params.alpha)
    w = np.zeros_like(g)
    out = np.zeros(t.size)
    for n in range(1, t.size):
        h = t[n] - t[n - 1]
        z = g * h
        e = np.exp(-z)
        phi1 = -np.expm1(-z) / g  # int_0^h e^{-g(h-s)} ds
        phi2 = (h - phi1) / (g * h)  # int_0^h e^{-g(h-s)} s/h ds
        w = e * w + m * (v[n - 1] * (phi1 - phi2) + v[n] * phi2)
        out[n] = 2.0 * params.kappa * float(np.sum(grid.weights * m * w))
    return out
