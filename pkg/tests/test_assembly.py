from __future__ import annotations

import logging
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fkvlab.assembly import (
    FieldKind,
    Model,
    ModelSpec,
    SideMesh,
    assemble_beam_block,
    assemble_system,
    assemble_wave_block,
    build_mesh,
    damping_indicator,
    damped_sampling,
    hermite_element,
    hermite_shape,
    p1_element,
    to_coo_text,
)
from fkvlab.errors import AssemblyError, DomainError
from tests.oracles import sympy_hermite, sympy_p1

MODELS = list(Model)


def random_side(seed: int, n: int = 7) -> SideMesh:
    rng = np.random.default_rng(seed)
    return SideMesh(np.concatenate([[0.0], np.cumsum(rng.uniform(0.05, 0.3, n))]))


class TestModelSpec:
    @pytest.mark.parametrize("kw,fragment", [
        (dict(d0=0.0), "d0 > 0"),
        (dict(a=-1.0), "a > 0"),
        (dict(l0=0.6, l1=0.5), "l0 < l1"),
        (dict(l1=1.5), "l1 < L"),
    ])
    def test_invariants(self, kw, fragment):
        with pytest.raises(DomainError, match=fragment):
            ModelSpec(Model.WW, **kw)

    def test_string_model(self):
        assert ModelSpec("webb").model is Model.WEBB
        with pytest.raises(DomainError):
            ModelSpec("XYZ")

    def test_damped_field(self):
        for m in (Model.EBBW, Model.WW):
            assert ModelSpec(m).right.kind is FieldKind.WaveP1
        for m in (Model.WEBB, Model.EBB, Model.EBBEBB):
            assert ModelSpec(m).right.kind is FieldKind.BeamHermite
        assert ModelSpec(Model.EBB).left is None

    def test_slope_flag_only_ebbw(self):
        ModelSpec(Model.EBBW, junction_slope_clamped=True)
        with pytest.raises(DomainError):
            ModelSpec(Model.WW, junction_slope_clamped=True)


class TestMesh:
    @pytest.mark.parametrize("model", MODELS)
    def test_fitted(self, model):
        spec = ModelSpec(model, l0=0.3, l1=0.7)
        mesh = build_mesh(spec, 10, 17)
        assert mesh.right.nodes[mesh.l0_index] == 0.3
        assert mesh.right.nodes[mesh.l1_index] == 0.7
        assert mesh.right.nodes[0] == 0.0 and mesh.right.nodes[-1] == 1.0
        if model is Model.EBB:
            assert mesh.left is None
        else:
            assert mesh.left.nodes[0] == -1.0 and mesh.left.nodes[-1] == 0.0

    def test_degenerate(self):
        with pytest.raises(AssemblyError):
            SideMesh(np.array([0.0, 0.5, 0.5, 1.0]))
        with pytest.raises(AssemblyError):
            SideMesh(np.array([0.0, 1.0]))


class TestWaveBlock:
    def test_textbook(self):
        blk = assemble_wave_block(SideMesh(np.array([0.0, 0.5, 1.0])), 1.0)
        h = 0.5
        expected = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]]) / h
        np.testing.assert_allclose(blk.stiffness.toarray(), expected, rtol=1e-15)

    @pytest.mark.parametrize("h,a", [(0.3, 2.5), (1.0, 1.0)])
    def test_sympy_element(self, h, a):
        m, k = p1_element(h, a)
        ms, ks = sympy_p1(h, a)
        np.testing.assert_allclose(m, ms, rtol=1e-14)
        np.testing.assert_allclose(k, ks, rtol=1e-14)

    @given(st.integers(0, 10_000), st.floats(0.1, 10.0))
    @settings(max_examples=30, deadline=None)
    def test_rigid_and_energy(self, seed, a):
        side = random_side(seed)
        blk = assemble_wave_block(side, a)
        assert np.abs(blk.stiffness @ np.ones(blk.size)).max() < 1e-9 * a / side.sizes.min()
        u = np.random.default_rng(seed).standard_normal(blk.size)
        exact = a * np.sum(np.diff(u) ** 2 / side.sizes)
        assert u @ blk.stiffness @ u == pytest.approx(exact, rel=1e-12)

    @given(st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_mass_spd(self, seed):
        blk = assemble_wave_block(random_side(seed), 1.0)
        assert np.linalg.eigvalsh(blk.mass.toarray()).min() > 0


class TestBeamBlock:
    @pytest.mark.parametrize("h,b", [(0.25, 1.0), (0.7, 3.0)])
    def test_sympy_element(self, h, b):
        m, k = hermite_element(h, b)
        ms, ks = sympy_hermite(h, b)
        np.testing.assert_allclose(m, ms, rtol=1e-13, atol=1e-15)
        np.testing.assert_allclose(k, ks, rtol=1e-13, atol=1e-13)

    def test_standard_stiffness_pattern(self):
        h, b = 0.5, 2.0
        _, k = hermite_element(h, b)
        np.testing.assert_allclose(k[0] * h**3 / b, [12, 6 * h, -12, 6 * h])

    @given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=30, deadline=None)
    def test_affine_kernel(self, seed, c0, c1):
        side = random_side(seed)
        blk = assemble_beam_block(side, 1.7)
        y = np.empty(blk.size)
        y[0::2] = c0 + c1 * side.nodes
        y[1::2] = c1
        assert np.abs(blk.stiffness @ y).max() < 1e-8 * (1 + abs(c0) + abs(c1)) / side.sizes.min() ** 3

    @given(st.integers(0, 10_000), st.lists(st.floats(-2, 2), min_size=4, max_size=4))
    @settings(max_examples=30, deadline=None)
    def test_cubic_energy_exact(self, seed, c):
        side = random_side(seed)
        b = 1.3
        blk = assemble_beam_block(side, b)
        p = np.polynomial.Polynomial(c)
        y = np.empty(blk.size)
        y[0::2], y[1::2] = p(side.nodes), p.deriv()(side.nodes)
        pp = p.deriv(2) ** 2
        exact = b * (pp.integ()(side.nodes[-1]) - pp.integ()(side.nodes[0]))
        # the affine part sits in the kernel, so the quadratic form cancels at |y|^T |K| |y|
        scale = np.abs(y) @ abs(blk.stiffness) @ np.abs(y)
        assert y @ blk.stiffness @ y == pytest.approx(exact, rel=1e-10, abs=1e-14 * scale)

    def test_shape_partition(self):
        s = np.linspace(0, 1, 7)
        val, d1, d2 = hermite_shape(s, 0.4)
        # affine reproduction: 1 and x
        np.testing.assert_allclose(val[:, 0] + val[:, 2], 1.0, atol=1e-14)
        np.testing.assert_allclose(d2[:, 0] + d2[:, 2], 0.0, atol=1e-12)


class TestDamping:
    def test_inside_only(self):
        spec = ModelSpec(Model.WW, L=2.0, l0=0.5, l1=1.0)
        mesh = build_mesh(spec, 8, 16)
        d = damping_indicator(spec, mesh)
        mids = 0.5 * (mesh.right.nodes[1:] + mesh.right.nodes[:-1])
        np.testing.assert_array_equal(d > 0, (mids > 0.5) & (mids < 1.0))
        assert set(np.unique(d)) <= {0.0, spec.d0}

    @given(st.floats(0.05, 0.45), st.floats(0.5, 0.95), st.floats(0.1, 5.0), st.integers(6, 40))
    @settings(max_examples=30, deadline=None)
    def test_integral(self, l0, l1, d0, n):
        spec = ModelSpec(Model.WEBB, l0=l0, l1=l1, d0=d0)
        mesh = build_mesh(spec, 4, n)
        d = damping_indicator(spec, mesh)
        assert np.sum(d * mesh.right.sizes) == pytest.approx(d0 * (l1 - l0), rel=1e-12)

    def test_unfitted(self):
        spec = ModelSpec(Model.WW)
        mesh = build_mesh(spec, 8, 8)
        other = ModelSpec(Model.WW, l0=0.3)
        with pytest.raises(AssemblyError):
            damping_indicator(other, mesh)


class TestConstraints:
    def test_ebb_clamp(self, caplog):
        spec = ModelSpec(Model.EBB)
        mesh = build_mesh(spec, 0, 8)
        with caplog.at_level(logging.WARNING):
            sys_ = assemble_system(spec, mesh)
        assert "no transmission coupling" in caplog.text
        # 9 nodes x 2 dofs minus value+slope at x=0
        assert sys_.size == 18 - 2
        xs = {(d.x, d.component) for d in sys_.dofs}
        assert (0.0, 0) not in xs and (0.0, 1) not in xs
        assert (1.0, 0) in xs and (1.0, 1) in xs

    def test_ww_dirichlet(self):
        spec = ModelSpec(Model.WW)
        sys_ = assemble_system(spec, build_mesh(spec, 6, 8))
        # 7 + 9 nodes, one shared, one removed at each outer end
        assert sys_.size == 7 + 9 - 1 - 2
        xs = [d.x for d in sys_.dofs]
        assert -1.0 not in xs and 1.0 not in xs and 0.0 in xs

    @pytest.mark.parametrize("model", MODELS)
    def test_constrained_spd(self, model):
        spec = ModelSpec(model)
        sys_ = assemble_system(spec, build_mesh(spec, 16, 16))
        K, M = sys_.stiffness.toarray(), sys_.mass.toarray()
        np.testing.assert_allclose(K, K.T, atol=1e-9)
        assert np.linalg.eigvalsh(K).min() > 0
        assert np.linalg.eigvalsh(M).min() > 0

    def test_slope_flag_removes_dof(self):
        plain = assemble_system(ModelSpec(Model.EBBW), build_mesh(ModelSpec(Model.EBBW), 8, 8))
        flag = ModelSpec(Model.EBBW, junction_slope_clamped=True)
        clamped = assemble_system(flag, build_mesh(flag, 8, 8))
        assert clamped.size == plain.size - 1

    def test_coo_export(self):
        spec = ModelSpec(Model.WW)
        K = assemble_system(spec, build_mesh(spec, 4, 4)).stiffness
        rows = to_coo_text(K).strip().splitlines()[1:]
        back = sp.coo_matrix(([float(r.split(",")[2]) for r in rows],
                              ([int(r.split(",")[0]) for r in rows], [int(r.split(",")[1]) for r in rows])),
                             shape=K.shape)
        np.testing.assert_array_equal(back.toarray(), K.toarray())


class TestTransmission:
    def _static(self, spec, n=12):
        sys_ = assemble_system(spec, build_mesh(spec, n, n))
        f = np.zeros(sys_.size)
        j = next(i for i, d in enumerate(sys_.dofs) if d.x == 0.0 and d.component == 0)
        f[j] = 1.0
        return sys_, np.linalg.solve(sys_.stiffness.toarray(), f), j

    @pytest.mark.parametrize("a,b,L", [(1.0, 1.0, 1.0), (2.0, 0.5, 1.5)])
    def test_ebbw_point_load(self, a, b, L):
        # cantilever tip stiffness 3b/L^3 in parallel with a string a/L
        spec = ModelSpec(Model.EBBW, a=a, b=b, L=L, l0=0.25 * L, l1=0.5 * L)
        sys_, q, j = self._static(spec)
        U = 1.0 / (3 * b / L**3 + a / L)
        assert q[j] == pytest.approx(U, rel=1e-10)
        # both forms at the merged dof: string flux a U / L plus beam shear 3 b U / L^3
        blocks = sys_.coupled
        full = sys_.expand(q)
        wave = blocks.right.stiffness @ full[blocks.right_map]
        beam = blocks.left.stiffness @ full[blocks.left_map]
        flux = wave[blocks.right.dof(0, 0)]
        shear = beam[blocks.left.dof(-1, 0)]
        assert flux == pytest.approx(a * U / L, rel=1e-10)
        assert shear == pytest.approx(3 * b * U / L**3, rel=1e-10)
        assert abs(flux + shear - 1.0) < 1e-10
        # zero bending moment at the junction is natural: beam moment residual vanishes
        assert abs(beam[blocks.left.dof(-1, 1)]) < 1e-10

    def test_ww_symmetric(self):
        spec = ModelSpec(Model.WW, a=1.0, b=1.0)
        sys_, q, j = self._static(spec, n=10)
        xs = np.array([d.x for d in sys_.dofs])
        np.testing.assert_allclose(q, 0.5 * (1 - np.abs(xs)), atol=1e-12)

    @pytest.mark.parametrize("model", [m for m in MODELS if m is not Model.EBB])
    def test_shared_value(self, model):
        spec = ModelSpec(model)
        sys_ = assemble_system(spec, build_mesh(spec, 6, 6))
        at_zero = [d for d in sys_.dofs if d.x == 0.0 and d.component == 0]
        assert len(at_zero) == 1


class TestEnergyConvergence:
    @staticmethod
    def _order(errs, hs):
        return np.polyfit(np.log(hs), np.log(errs), 1)[0]

    def test_wave_energy(self):
        a = 1.5
        exact = a * (math.pi / 2) ** 2 * 0.5  # int_0^1 a (pi/2 cos(pi x / 2))^2
        errs, hs = [], []
        for n in (8, 16, 32, 64):
            side = SideMesh(np.linspace(0, 1, n + 1))
            blk = assemble_wave_block(side, a)
            u = np.sin(math.pi * side.nodes / 2)
            errs.append(abs(u @ blk.stiffness @ u - exact))
            hs.append(1 / n)
        assert self._order(errs, hs) >= 1.9

    def test_beam_energy(self):
        b = 0.8
        exact = b * math.pi**4 * 0.5  # int_0^1 b (pi^2 sin(pi x))^2
        errs, hs = [], []
        for n in (4, 8, 16, 32):
            side = SideMesh(np.linspace(0, 1, n + 1))
            blk = assemble_beam_block(side, b)
            y = np.empty(blk.size)
            y[0::2], y[1::2] = np.sin(math.pi * side.nodes), math.pi * np.cos(math.pi * side.nodes)
            errs.append(abs(y @ blk.stiffness @ y - exact))
            hs.append(1 / n)
        assert self._order(errs, hs) >= 1.9


class TestSampling:
    @pytest.mark.parametrize("model", MODELS)
    def test_points_in_damped_region(self, model):
        spec = ModelSpec(model)
        sys_ = assemble_system(spec, build_mesh(spec, 8, 16))
        s = damped_sampling(sys_)
        assert np.all((s.points > spec.l0) & (s.points < spec.l1))
        assert s.weights.sum() == pytest.approx(spec.l1 - spec.l0, rel=1e-12)
        np.testing.assert_allclose(s.sqrt_d, math.sqrt(spec.d0))
