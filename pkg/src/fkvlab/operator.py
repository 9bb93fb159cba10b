"""Semi-discrete generator of the augmented (diffusive) system.

State layout: ``X = (q, p, omega)`` with ``q`` the merged displacement
unknowns of both fields, ``p`` their velocities and ``omega[j, k]`` the
diffusive field at damped quadrature point ``j`` and xi-node ``k``.  The
energy is ``0.5 * X^T M X`` with

    M = blockdiag(K, M_mass, Omega),   Omega_jk = 2 kappa w_k m_j,

and the generator matrix ``A`` satisfies ``M X' = A X``.  Velocity-to-omega
coupling is the exact negative transpose of omega-to-load coupling, which
makes ``X^T A X = -sum Omega_jk (xi_k^2 + eta) omega_jk^2`` hold to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import ConstrainedSystem, DampedSampling, ModelSpec, SpatialMesh, assemble_system, damped_sampling
from .errors import AssemblyError, DomainError, HypothesisError
from .kernel import FractionalParams, XiGrid, mu


@dataclass
class StateVector:
    """Displacements ``q``, velocities ``p`` and diffusive field ``omega``."""

    q: np.ndarray
    p: np.ndarray
    omega: np.ndarray  # (n_points, n_xi)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.q, self.p, self.omega.ravel()])

    def copy(self) -> "StateVector":
        return StateVector(self.q.copy(), self.p.copy(), self.omega.copy())


@dataclass
class DiscreteOperator:
    spec: ModelSpec
    mesh: SpatialMesh
    grid: XiGrid | None
    params: FractionalParams
    system: ConstrainedSystem
    sampling: DampedSampling
    M: sp.csr_matrix
    A: sp.csr_matrix
    blocks: dict[str, slice]
    decay: np.ndarray  # xi_k^2 + eta, per omega entry (flattened)
    omega_mass: np.ndarray  # Omega_jk, flattened
    coupling: sp.csr_matrix = None  # C: velocity -> omega forcing, scaled by Omega
    _factor: tuple | None = field(default=None, repr=False)
    _klu: object = field(default=None, repr=False)

    @property
    def n_disp(self) -> int:
        return self.system.size

    @property
    def n_xi(self) -> int:
        return 0 if self.grid is None else self.grid.count

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    # -- state helpers ---------------------------------------------------
    def zeros(self) -> StateVector:
        n = self.n_disp
        return StateVector(np.zeros(n), np.zeros(n), np.zeros((self.sampling.count if self.n_xi else 0, self.n_xi)))

    def unflatten(self, x: np.ndarray) -> StateVector:
        x = np.asarray(x)
        if x.shape != (self.dim,):
            raise DomainError(f"state has size {x.shape}, operator expects ({self.dim},)")
        b = self.blocks
        om = x[b["omega"]].reshape(-1, self.n_xi) if self.n_xi else x[b["omega"]].reshape(0, 0)
        return StateVector(x[b["q"]].copy(), x[b["p"]].copy(), om.copy())

    def as_flat(self, x) -> np.ndarray:
        if isinstance(x, StateVector):
            x = x.flat()
        x = np.asarray(x)
        if x.shape != (self.dim,):
            raise DomainError(f"state has size {x.shape}, operator expects ({self.dim},)")
        return x

    def field_values(self, x, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Nodal coordinates and values of field ``name`` (clamped nodes omitted)."""
        s = x if isinstance(x, StateVector) else self.unflatten(x)
        idx = self.system.field_indices(name, 0)
        return np.array([self.system.dofs[i].x for i in idx]), s.q[idx]

    def random_state(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.dim)

    def stiffness_lu(self):
        if self._klu is None:
            self._klu = spla.splu(sp.csc_matrix(self.system.stiffness))
        return self._klu

    def solver(self, s: complex) -> "ShiftedSolver":
        """Factorized ``s M - A``."""
        return ShiftedSolver(self, s)

    # -- M-orthonormal coordinates -----------------------------------------
    def block_factors(self) -> tuple[sp.csr_matrix, sp.csr_matrix, np.ndarray]:
        """Cholesky factors of the stiffness and mass blocks and ``sqrt(Omega)``."""
        if self._factor is None:
            lk = banded_cholesky(self.system.stiffness)
            lm = banded_cholesky(self.system.mass)
            self._factor = (lk, lm, np.sqrt(self.omega_mass))
        return self._factor

    def apply_factor(self, x: np.ndarray, transpose: bool = False) -> np.ndarray:
        """``L x`` (or ``L^T x``) with ``L L^T = M``."""
        lk, lm, lw = self.block_factors()
        b = self.blocks
        if transpose:
            lk, lm = lk.T, lm.T
        return np.concatenate([lk @ x[b["q"]], lm @ x[b["p"]], lw * x[b["omega"]]])

    def factor(self) -> np.ndarray:
        """Dense ``L`` with ``L L^T = M``."""
        lk, lm, lw = self.block_factors()
        lk, lm = lk.toarray(), lm.toarray()
        return sla.block_diag(lk, lm, np.diag(lw)) if lw.size else sla.block_diag(lk, lm)

    def normalized(self) -> np.ndarray:
        """Dense ``L^-1 A L^-T``: the generator in M-orthonormal coordinates.

        The skew and symmetric parts are transformed separately so that the
        symmetric part stays exactly negative semidefinite; transforming ``A``
        as a whole leaks ``eps * cond(L)`` into it and can push stiff
        eigenvalues across the axis.
        """
        L = self.factor()

        def congruence(S):
            tmp = sla.solve_triangular(L, S, lower=True)
            return sla.solve_triangular(L, tmp.T, lower=True).T

        A = self.A.toarray()
        skew = congruence(0.5 * (A - A.T))
        sym = congruence(0.5 * (A + A.T))
        return 0.5 * (skew - skew.T) + 0.5 * (sym + sym.T)


def banded_cholesky(S: sp.spmatrix) -> sp.csr_matrix:
    """Lower Cholesky factor of a banded SPD matrix, returned sparse."""
    S = sp.csr_matrix(S)
    n = S.shape[0]
    coo = S.tocoo()
    bw = int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0
    ab = np.zeros((bw + 1, n))
    for k in range(bw + 1):
        ab[k, : n - k] = S.diagonal(-k)
    try:
        cb = sla.cholesky_banded(ab, lower=True)
    except np.linalg.LinAlgError as exc:
        raise AssemblyError(f"matrix is not positive definite: {exc}") from exc
    return sp.diags([cb[k, : n - k] for k in range(bw + 1)], [-k for k in range(bw + 1)], format="csr")


def _real_solve(lu, b):
    if np.iscomplexobj(b):
        return lu.solve(np.ascontiguousarray(b.real)) + 1j * lu.solve(np.ascontiguousarray(b.imag))
    return lu.solve(np.ascontiguousarray(b, dtype=float))


class ShiftedSolver:
    """Solves ``(s M - A) x = b`` by eliminating ``omega`` and ``q``.

    With ``D = Omega (s + xi^2 + eta)`` diagonal, the velocity block satisfies

        (K / s + s M_mass + C^T D^-1 C) p = b_p - b_q / s - C^T D^-1 b_omega,

    a banded system of the displacement size.  ``transpose=True`` solves with
    ``A^T`` in place of ``A`` (flip the sign of ``K`` and ``C``); combined with
    ``conj(s)`` this gives the Hermitian-adjoint solve.
    """

    def __init__(self, op: "DiscreteOperator", s: complex):
        if s == 0:
            raise DomainError("shift s must be non-zero")
        self.op = op
        self.s = s
        dtype = complex if isinstance(s, complex) or np.iscomplexobj(s) else float
        self.dtype = dtype
        K, Mm = op.system.stiffness, op.system.mass
        C = op.coupling
        if C.shape[0]:
            self.dinv = 1.0 / (op.omega_mass * (s + op.decay))
            R = K / s + s * Mm + C.T @ sp.diags(self.dinv) @ C
        else:
            self.dinv = np.zeros(0)
            R = K / s + s * Mm
        self.lu = spla.splu(sp.csc_matrix(R, dtype=dtype))
        self.klu = op.stiffness_lu()

    def solve(self, b: np.ndarray, transpose: bool = False) -> np.ndarray:
        op, s = self.op, self.s
        sig = -1.0 if transpose else 1.0
        bl = op.blocks
        bq, bp, bw = b[bl["q"]], b[bl["p"]], b[bl["omega"]]
        C = op.coupling
        rhs = bp - sig * bq / s
        if bw.size:
            rhs = rhs - sig * (C.T @ (self.dinv * bw))
        p = self.lu.solve(rhs) if self.dtype is complex else _real_solve(self.lu, rhs)
        q = _real_solve(self.klu, bq) / s + sig * p / s
        w = self.dinv * (bw + sig * (C @ p)) if bw.size else bw
        return np.concatenate([q, p, w])


def assemble_generator(
    spec: ModelSpec,
    mesh: SpatialMesh,
    grid: XiGrid | None,
    params: FractionalParams,
    *,
    undamped: bool = False,
) -> DiscreteOperator:
    """Galerkin generator of the augmented system.

    ``undamped=True`` drops the damping and the diffusive field altogether,
    leaving the conservative coupled system (used as a test limit).
    """
    if not params.eta > 0:
        raise HypothesisError(f"evolution and resolvent experiments need eta > 0 (got {params.eta})")
    system = assemble_system(spec, mesh)
    sampling = damped_sampling(system, 0.0 if undamped else 1.0)
    if undamped:
        grid_used = None
        sampling = DampedSampling(sampling.D[:0], sampling.points[:0], sampling.weights[:0], sampling.sqrt_d[:0])
    else:
        if grid is None:
            raise AssemblyError("damped operator needs a xi grid")
        grid_used = grid
    n = system.size
    K, Mm = system.stiffness, system.mass
    nj = sampling.count
    nk = 0 if grid_used is None else grid_used.count
    nw = nj * nk
    if nw:
        w = grid_used.weights
        mu_k = mu(grid_used.nodes, params.alpha)
        omega_mass = (2.0 * params.kappa * np.outer(sampling.weights, w)).ravel()
        decay = np.tile(grid_used.nodes**2 + params.eta, nj)
        # C[(j,k), :] = Omega_jk mu_k sqrt(d_j) D[j, :]
        scale = (omega_mass.reshape(nj, nk) * mu_k[None, :] * sampling.sqrt_d[:, None]).ravel()
        expand = sp.kron(sp.identity(nj, format="csr"), np.ones((nk, 1)), format="csr")
        C = sp.diags(scale) @ expand @ sampling.D
    else:
        omega_mass = np.zeros(0)
        decay = np.zeros(0)
        C = sp.csr_matrix((0, n))
    Z = sp.csr_matrix((n, n))
    A = sp.bmat([
        [Z, K, None],
        [-K, Z, -C.T],
        [sp.csr_matrix((nw, n)), C, sp.diags(-omega_mass * decay) if nw else None],
    ], format="csr") if nw else sp.bmat([[Z, K], [-K, Z]], format="csr")
    M = sp.block_diag([K, Mm] + ([sp.diags(omega_mass)] if nw else []), format="csr")
    blocks = {"q": slice(0, n), "p": slice(n, 2 * n), "omega": slice(2 * n, 2 * n + nw)}
    return DiscreteOperator(spec, mesh, grid_used, params, system, sampling, M, A, blocks, decay, omega_mass, C.tocsr())


def build_operator(
    spec: ModelSpec, params: FractionalParams, grid: XiGrid, n_left: int, n_right: int, **kw
) -> DiscreteOperator:
    from .assembly import build_mesh

    return assemble_generator(spec, build_mesh(spec, n_left, n_right), grid, params, **kw)


def energy(op: DiscreteOperator, x) -> float:
    """``0.5 * X^T M X``: kinetic + elastic + diffusive energy."""
    x = op.as_flat(x)
    return 0.5 * float(x @ (op.M @ x))


def dissipation(op: DiscreteOperator, x) -> float:
    """Dissipation rate ``sum Omega_jk (xi_k^2 + eta) omega_jk^2``; dE/dt = -dissipation."""
    x = op.as_flat(x)
    om = x[op.blocks["omega"]]
    return float(np.sum(op.omega_mass * op.decay * om * om))


def generator_form(op: DiscreteOperator, x) -> float:
    """``Re <A X, X>_M = X^T A X`` for a real state."""
    x = op.as_flat(x)
    return float(x @ (op.A @ x))


def state_to_csv(op: DiscreteOperator, x) -> str:
    """Labeled ``field,index,value`` blocks of a state snapshot."""
    s = x if isinstance(x, StateVector) else op.unflatten(x)
    lines = ["field,index,value"]
    for name, arr in (("q", s.q), ("p", s.p), ("omega", s.omega.ravel())):
        lines += [f"{name},{i},{v:.17g}" for i, v in enumerate(arr)]
    return "\n".join(lines) + "\n"
