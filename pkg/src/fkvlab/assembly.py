"""One-dimensional finite elements for the five coupled wave/beam systems.

Wave fields use P1 elements, beam fields Hermite cubics (value and slope per
node).  The undamped field lives on ``(-L, 0)``, the damped one on ``(0, L)``;
the single-beam model has only the damped side.  Continuity at ``x = 0`` is
imposed by sharing the value unknown, every flux/moment balance is natural.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, DomainError

log = logging.getLogger(__name__)


class Model(enum.Enum):
    EBBW = "EBBW"  # beam (-L,0) | damped wave (0,L)
    WW = "WW"  # wave (-L,0) | damped wave (0,L)
    WEBB = "WEBB"  # wave (-L,0) | damped beam (0,L)
    EBB = "EBB"  # damped cantilever beam (0,L)
    EBBEBB = "EBBEBB"  # beam (-L,0) | damped beam (0,L)


class FieldKind(enum.Enum):
    WaveP1 = "WaveP1"
    BeamHermite = "BeamHermite"


@dataclass(frozen=True)
class FieldLayout:
    name: str  # "u" or "y", as in the model equations
    kind: FieldKind
    coef: str  # "a" or "b"


# (left field or None, right/damped field)
LAYOUT = {
    Model.EBBW: (FieldLayout("y", FieldKind.BeamHermite, "b"), FieldLayout("u", FieldKind.WaveP1, "a")),
    Model.WW: (FieldLayout("y", FieldKind.WaveP1, "b"), FieldLayout("u", FieldKind.WaveP1, "a")),
    Model.WEBB: (FieldLayout("u", FieldKind.WaveP1, "a"), FieldLayout("y", FieldKind.BeamHermite, "b")),
    Model.EBB: (None, FieldLayout("y", FieldKind.BeamHermite, "b")),
    Model.EBBEBB: (FieldLayout("u", FieldKind.BeamHermite, "a"), FieldLayout("y", FieldKind.BeamHermite, "b")),
}


@dataclass(frozen=True)
class ModelSpec:
    """Physical description of one of the five damped systems.

    ``a`` multiplies the stiffness of ``u`` and ``b`` that of ``y``, with the
    field names of the model equations.  ``junction_slope_clamped`` switches
    the beam-wave junction of EBBW from zero bending moment to zero rotation.
    """

    model: Model
    a: float = 1.0
    b: float = 1.0
    L: float = 1.0
    l0: float = 0.25
    l1: float = 0.5
    d0: float = 1.0
    junction_slope_clamped: bool = False

    def __post_init__(self):
        if not isinstance(self.model, Model):
            try:
                object.__setattr__(self, "model", Model(str(self.model).upper()))
            except ValueError:
                raise DomainError(f"unknown model {self.model!r}") from None
        for name in ("a", "b", "L", "d0"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name}={getattr(self, name)!r} violates {name} > 0")
        if not 0 < self.l0 < self.l1 < self.L:
            raise DomainError(f"damping interval violates 0 < l0 < l1 < L (l0={self.l0}, l1={self.l1}, L={self.L})")
        if self.junction_slope_clamped and self.model is not Model.EBBW:
            raise DomainError("junction_slope_clamped only applies to EBBW")

    @property
    def left(self) -> FieldLayout | None:
        return LAYOUT[self.model][0]

    @property
    def right(self) -> FieldLayout:
        return LAYOUT[self.model][1]

    def coefficient(self, layout: FieldLayout) -> float:
        return getattr(self, layout.coef)


# --------------------------------------------------------------------------
# meshes


@dataclass(frozen=True)
class SideMesh:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        if nodes.size < 3:
            raise AssemblyError("a mesh side needs at least 2 elements")
        if np.any(np.diff(nodes) <= 0):
            raise AssemblyError("degenerate or unordered element in mesh")

    @property
    def n_elements(self) -> int:
        return self.nodes.size - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.nodes)


@dataclass(frozen=True)
class SpatialMesh:
    left: SideMesh | None
    right: SideMesh
    l0_index: int
    l1_index: int

    @property
    def n_left(self) -> int:
        return 0 if self.left is None else self.left.n_elements

    @property
    def n_right(self) -> int:
        return self.right.n_elements

    @property
    def h_max(self) -> float:
        hs = [self.right.sizes.max()]
        if self.left is not None:
            hs.append(self.left.sizes.max())
        return float(max(hs))


def _split_counts(lengths, n_total):
    raw = np.asarray(lengths) / sum(lengths) * n_total
    counts = np.maximum(1, np.round(raw).astype(int))
    return counts


def build_mesh(spec: ModelSpec, n_left: int, n_right: int) -> SpatialMesh:
    """Piecewise-uniform mesh with ``l0`` and ``l1`` placed exactly on nodes."""
    if n_right < 3:
        raise AssemblyError("n_right must be >= 3 to fit the damping interval")
    L, l0, l1 = spec.L, spec.l0, spec.l1
    c = _split_counts([l0, l1 - l0, L - l1], n_right)
    right = np.concatenate([
        np.linspace(0.0, l0, c[0] + 1)[:-1],
        np.linspace(l0, l1, c[1] + 1)[:-1],
        np.linspace(l1, L, c[2] + 1),
    ])
    right[c[0]] = l0
    right[c[0] + c[1]] = l1
    left = None
    if spec.left is not None:
        if n_left < 2:
            raise AssemblyError("n_left must be >= 2")
        left = SideMesh(np.linspace(-L, 0.0, n_left + 1))
    return SpatialMesh(left, SideMesh(right), int(c[0]), int(c[0] + c[1]))


# --------------------------------------------------------------------------
# element blocks


@dataclass(frozen=True)
class FieldBlock:
    """Unconstrained mass and stiffness of one field on one side."""

    kind: FieldKind
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    nodes: np.ndarray
    dofs_per_node: int

    @property
    def size(self) -> int:
        return self.mass.shape[0]

    def dof(self, node: int, component: int = 0) -> int:
        """Index of ``component`` (0 value, 1 slope) at ``node``."""
        if node < 0:
            node += self.nodes.size
        return self.dofs_per_node * node + component


def p1_element(h: float, coef: float):
    m = h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
    k = coef / h * np.array([[1.0, -1.0], [-1.0, 1.0]])
    return m, k


def hermite_element(h: float, coef: float):
    m = h / 420.0 * np.array([
        [156, 22 * h, 54, -13 * h],
        [22 * h, 4 * h * h, 13 * h, -3 * h * h],
        [54, 13 * h, 156, -22 * h],
        [-13 * h, -3 * h * h, -22 * h, 4 * h * h],
    ])
    k = coef / h**3 * np.array([
        [12, 6 * h, -12, 6 * h],
        [6 * h, 4 * h * h, -6 * h, 2 * h * h],
        [-12, -6 * h, 12, -6 * h],
        [6 * h, 2 * h * h, -6 * h, 4 * h * h],
    ])
    return m, k


def hermite_shape(s, h):
    """Hermite basis and its x-derivatives at reference points ``s`` in [0, 1].

    Returns arrays of shape ``(3, len(s), 4)`` for (value, d/dx, d2/dx2).
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    val = np.stack([1 - 3 * s**2 + 2 * s**3, h * (s - 2 * s**2 + s**3), 3 * s**2 - 2 * s**3, h * (-s**2 + s**3)], axis=-1)
    d1 = np.stack([-6 * s + 6 * s**2, h * (1 - 4 * s + 3 * s**2), 6 * s - 6 * s**2, h * (-2 * s + 3 * s**2)], axis=-1) / h
    d2 = np.stack([-6 + 12 * s, h * (-4 + 6 * s), 6 - 12 * s, h * (-2 + 6 * s)], axis=-1) / h**2
    return np.stack([val, d1, d2])


def _assemble(nodes, coef, element, dpn):
    n_el = nodes.size - 1
    size = dpn * nodes.size
    loc = 2 * dpn
    rows, cols, mv, kv = [], [], [], []
    for e in range(n_el):
        h = nodes[e + 1] - nodes[e]
        if not h > 0:
            raise AssemblyError(f"degenerate element {e} (h={h})")
        me, ke = element(h, coef)
        idx = dpn * e + np.arange(loc)
        rows.append(np.repeat(idx, loc))
        cols.append(np.tile(idx, loc))
        mv.append(me.ravel())
        kv.append(ke.ravel())
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    mass = sp.csr_matrix((np.concatenate(mv), (rows, cols)), shape=(size, size))
    stiff = sp.csr_matrix((np.concatenate(kv), (rows, cols)), shape=(size, size))
    return mass, stiff


def assemble_wave_block(side: SideMesh, coefficient: float) -> FieldBlock:
    """P1 mass and ``coefficient * int u_x v_x`` stiffness, no boundary conditions."""
    if side.n_elements < 2:
        raise AssemblyError("wave block needs >= 2 elements")
    m, k = _assemble(side.nodes, coefficient, p1_element, 1)
    return FieldBlock(FieldKind.WaveP1, m, k, side.nodes, 1)


def assemble_beam_block(side: SideMesh, coefficient: float) -> FieldBlock:
    """Hermite-cubic mass and ``coefficient * int y_xx v_xx`` bending stiffness."""
    if side.n_elements < 2:
        raise AssemblyError("beam block needs >= 2 elements")
    m, k = _assemble(side.nodes, coefficient, hermite_element, 2)
    return FieldBlock(FieldKind.BeamHermite, m, k, side.nodes, 2)


def assemble_block(side: SideMesh, layout: FieldLayout, spec: ModelSpec) -> FieldBlock:
    coef = spec.coefficient(layout)
    if layout.kind is FieldKind.WaveP1:
        return assemble_wave_block(side, coef)
    return assemble_beam_block(side, coef)


# --------------------------------------------------------------------------
# damping


def damping_indicator(spec: ModelSpec, mesh: SpatialMesh) -> np.ndarray:
    """Element-wise ``d(x)`` on the damped side: ``d0`` inside ``(l0, l1)``, else 0."""
    nodes = mesh.right.nodes
    i0, i1 = mesh.l0_index, mesh.l1_index
    if not (math.isclose(nodes[i0], spec.l0, abs_tol=1e-14 * spec.L)
            and math.isclose(nodes[i1], spec.l1, abs_tol=1e-14 * spec.L)):
        raise AssemblyError("mesh is not fitted to the damping interval")
    d = np.zeros(mesh.n_right)
    d[i0:i1] = spec.d0
    return d


# --------------------------------------------------------------------------
# global numbering, transmission and boundary conditions


@dataclass(frozen=True)
class DofInfo:
    """Where a global unknown lives: field name, side, node index and component."""

    field: str
    side: str
    node: int
    component: int
    x: float


@dataclass
class CoupledSystem:
    """Merged (pre-constraint) global numbering of the two fields."""

    spec: ModelSpec
    left: FieldBlock | None
    right: FieldBlock
    left_map: np.ndarray | None  # local dof -> global dof
    right_map: np.ndarray
    size: int
    shared: tuple[int, ...] = ()


def couple_transmission(spec: ModelSpec, left: FieldBlock | None, right: FieldBlock) -> CoupledSystem:
    """Merge the value unknowns of both fields at ``x = 0``.

    Slopes at the junction stay independent; flux and moment balances hold
    weakly by summing the two forms.  For the single-beam model this is a no-op.
    """
    if left is None or spec.left is None:
        if spec.model is Model.EBB:
            log.warning("model EBB has a single field; no transmission coupling applied")
        return CoupledSystem(spec, None, right, None, np.arange(right.size), right.size)
    left_map = np.arange(left.size)
    nxt = left.size
    right_map = np.empty(right.size, dtype=int)
    shared_left = left.dof(-1, 0)
    shared_right = right.dof(0, 0)
    for i in range(right.size):
        if i == shared_right:
            right_map[i] = shared_left
        else:
            right_map[i] = nxt
            nxt += 1
    return CoupledSystem(spec, left, right, left_map, right_map, nxt, shared=(int(shared_left),))


def _scatter(block: FieldBlock, mp: np.ndarray, size: int, which: str) -> sp.csr_matrix:
    mat = getattr(block, which).tocoo()
    return sp.csr_matrix((mat.data, (mp[mat.row], mp[mat.col])), shape=(size, size))


def essential_dofs(spec: ModelSpec, coupled: CoupledSystem) -> list[int]:
    """Global indices removed by value/slope clamps."""
    m = spec.model
    out: list[int] = []
    right, rmap = coupled.right, coupled.right_map
    if m is Model.EBB:
        out += [rmap[right.dof(0, 0)], rmap[right.dof(0, 1)]]
        return out
    left, lmap = coupled.left, coupled.left_map
    # outer end of the undamped side at x = -L
    out.append(lmap[left.dof(0, 0)])
    if left.kind is FieldKind.BeamHermite:
        out.append(lmap[left.dof(0, 1)])
    # outer end of the damped side at x = L
    out.append(rmap[right.dof(-1, 0)])
    if right.kind is FieldKind.BeamHermite:
        out.append(rmap[right.dof(-1, 1)])
    if spec.junction_slope_clamped:
        out.append(lmap[left.dof(-1, 1)])
    return sorted(int(i) for i in out)


@dataclass
class ConstrainedSystem:
    """Global mass/stiffness on the retained unknowns."""

    spec: ModelSpec
    mesh: SpatialMesh
    coupled: CoupledSystem
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    retained: np.ndarray  # retained global (pre-constraint) indices
    dofs: list[DofInfo] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.retained.size

    def reduce(self, global_vector: np.ndarray) -> np.ndarray:
        return np.asarray(global_vector)[self.retained]

    def expand(self, reduced: np.ndarray) -> np.ndarray:
        full = np.zeros(self.coupled.size, dtype=np.result_type(reduced, float))
        full[self.retained] = reduced
        return full

    def field_indices(self, name: str, component: int = 0) -> np.ndarray:
        """Reduced indices of ``name``'s ``component`` ordered by node."""
        idx = [i for i, d in enumerate(self.dofs) if d.field == name and d.component == component]
        return np.array(sorted(idx, key=lambda i: self.dofs[i].x), dtype=int)


def apply_boundary_conditions(spec: ModelSpec, coupled: CoupledSystem, mesh: SpatialMesh) -> ConstrainedSystem:
    """Eliminate clamped unknowns and return the reduced global matrices."""
    if not isinstance(spec.model, Model):
        raise DomainError(f"unknown model {spec.model!r}")
    size = coupled.size
    mass = _scatter(coupled.right, coupled.right_map, size, "mass")
    stiff = _scatter(coupled.right, coupled.right_map, size, "stiffness")
    if coupled.left is not None:
        mass = mass + _scatter(coupled.left, coupled.left_map, size, "mass")
        stiff = stiff + _scatter(coupled.left, coupled.left_map, size, "stiffness")
    fixed = set(essential_dofs(spec, coupled))
    retained = np.array([i for i in range(size) if i not in fixed], dtype=int)
    info: dict[int, DofInfo] = {}
    sides = [("right", spec.right, coupled.right, coupled.right_map)]
    if coupled.left is not None:
        sides.insert(0, ("left", spec.left, coupled.left, coupled.left_map))
    for side, layout, block, mp in sides:
        for local in range(block.size):
            g = int(mp[local])
            node, comp = divmod(local, block.dofs_per_node)
            info.setdefault(g, DofInfo(layout.name, side, node, comp, float(block.nodes[node])))
    dofs = [info[int(g)] for g in retained]
    mass = mass[retained][:, retained].tocsr()
    stiff = stiff[retained][:, retained].tocsr()
    return ConstrainedSystem(spec, mesh, coupled, mass, stiff, retained, dofs)


def assemble_system(spec: ModelSpec, mesh: SpatialMesh) -> ConstrainedSystem:
    """Blocks, transmission coupling and clamps in one call."""
    left = None
    if spec.left is not None:
        if mesh.left is None:
            raise AssemblyError(f"model {spec.model.value} needs a left mesh side")
        left = assemble_block(mesh.left, spec.left, spec)
    right = assemble_block(mesh.right, spec.right, spec)
    coupled = couple_transmission(spec, left, right)
    return apply_boundary_conditions(spec, coupled, mesh)


# --------------------------------------------------------------------------
# damped-derivative sampling


GAUSS2 = (np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)]), np.array([0.5, 0.5]))


@dataclass(frozen=True)
class DampedSampling:
    """Damped derivative of the velocity at quadrature points of ``(l0, l1)``.

    ``D @ v`` gives ``v_x`` (wave) or ``v_xx`` (beam) at each point; ``weights``
    are the quadrature weights ``m_j`` and ``sqrt_d`` the values of ``sqrt(d)``.
    """

    D: sp.csr_matrix
    points: np.ndarray
    weights: np.ndarray
    sqrt_d: np.ndarray

    @property
    def count(self) -> int:
        return self.points.size


def damped_sampling(system: ConstrainedSystem, d_scale: float = 1.0) -> DampedSampling:
    """Quadrature points of the damped elements and the derivative matrix there."""
    spec, mesh = system.spec, system.mesh
    d = damping_indicator(spec, mesh) * d_scale
    nodes = mesh.right.nodes
    block = system.coupled.right
    rmap = system.coupled.right_map
    pos = {int(g): i for i, g in enumerate(system.retained)}
    rows, cols, vals, pts, wts, sq = [], [], [], [], [], []
    j = 0
    for e in np.flatnonzero(d > 0):
        x0, h = nodes[e], nodes[e + 1] - nodes[e]
        if block.kind is FieldKind.WaveP1:
            refs, rw = np.array([0.5]), np.array([1.0])
            local = [block.dof(e), block.dof(e + 1)]
            deriv = np.array([[-1.0 / h, 1.0 / h]])
        else:
            refs, rw = GAUSS2
            local = [block.dof(e, 0), block.dof(e, 1), block.dof(e + 1, 0), block.dof(e + 1, 1)]
            deriv = hermite_shape(refs, h)[2]
        for q in range(refs.size):
            for c, ldof in enumerate(local):
                g = int(rmap[ldof])
                if g in pos:
                    rows.append(j)
                    cols.append(pos[g])
                    vals.append(deriv[q, c])
            pts.append(x0 + refs[q] * h)
            wts.append(rw[q] * h)
            sq.append(math.sqrt(d[e]))
            j += 1
    D = sp.csr_matrix((vals, (rows, cols)), shape=(j, system.size))
    return DampedSampling(D, np.array(pts), np.array(wts), np.array(sq))


# --------------------------------------------------------------------------
# export


def to_coo_text(mat) -> str:
    """Matrix in ``row,col,value`` text form (one entry per line)."""
    coo = sp.coo_matrix(mat)
    lines = ["row,col,value"]
    lines += [f"{r},{c},{v:.17g}" for r, c, v in zip(coo.row, coo.col, coo.data)]
    return "\n".join(lines) + "\n"
