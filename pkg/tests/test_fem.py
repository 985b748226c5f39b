import gc
import math
import weakref

import numpy as np
import pytest
import scipy.sparse as sp
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptive_phasefield.fem import (FieldState, FunctionSpaces, LinearSystem, NumericalFailure,
                                     apply_dirichlet, assemble_elasticity, assemble_phasefield,
                                     cell_strain_energy, interpolate_p1_vector, interpolate_p2,
                                     internal_forces, phasefield_residual, quadrature_rule,
                                     reaction_force, solve_spd, spaces_for, total_energy)
from adaptive_phasefield.fem.spaces import p2_values
from adaptive_phasefield.mesh import TriMesh, build_rectangle_mesh, tag_interior_segment
from adaptive_phasefield.model import MaterialParams, epsilon_field

MAT = MaterialParams()


def single_triangle():
    return TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]],
                   ["bottom", "right", "left"])


def random_state(mesh, seed=0, eps=None):
    rng = np.random.default_rng(seed)
    s = spaces_for(mesh)
    return FieldState(u=rng.normal(scale=1e-3, size=s.n_u), c=rng.uniform(0, 1, s.n_c),
                      eps=rng.uniform(0.05, 0.15, (mesh.n_cells, 3)) if eps is None else eps,
                      H=rng.uniform(0, 50, (mesh.n_cells, s.n_quad)))


def test_cached_spaces_are_released_with_their_mesh():
    mesh = build_rectangle_mesh(1, 1, 0.25)
    assert spaces_for(mesh) is spaces_for(mesh)
    probe = weakref.ref(spaces_for(mesh))
    del mesh
    gc.collect()
    assert probe() is None


class TestQuadrature:
    def test_centroid_rule(self):
        pts, wts = quadrature_rule(1)
        np.testing.assert_allclose(pts, [[1 / 3, 1 / 3, 1 / 3]])
        np.testing.assert_allclose(wts, [0.5])

    @pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6])
    def test_unit_integral(self, degree):
        assert quadrature_rule(degree)[1].sum() == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6])
    def test_monomials_exact(self, degree):
        x, y = sympy.symbols("x y")
        pts, wts = quadrature_rule(degree)
        xs, ys = pts[:, 1], pts[:, 2]
        for i in range(degree + 1):
            for j in range(degree + 1 - i):
                exact = sympy.integrate(sympy.integrate(x**i * y**j, (y, 0, 1 - x)), (x, 0, 1))
                got = np.sum(wts * xs**i * ys**j)
                assert got == pytest.approx(float(exact), rel=1e-13, abs=1e-15), (i, j)

    @pytest.mark.parametrize("degree", [0, 7, -1])
    def test_unsupported(self, degree):
        with pytest.raises(ValueError):
            quadrature_rule(degree)

    def test_partition_of_unity(self):
        m = build_rectangle_mesh(1, 1, 0.5)
        s = spaces_for(m)
        np.testing.assert_allclose(s.p2_at_q.sum(axis=1), 1.0, atol=1e-13)
        np.testing.assert_allclose(s.qpts.sum(axis=1), 1.0, atol=1e-13)
        np.testing.assert_allclose(s.grad_lambda.sum(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(p2_values(np.random.default_rng(0).dirichlet([1, 1, 1], 20))
                                   .sum(axis=1), 1.0, atol=1e-13)


class TestElasticity:
    def test_patch_stress(self):
        m = single_triangle()
        g = np.array([[1e-3, 4e-4], [-2e-4, 3e-4]])
        u = interpolate_p1_vector(m, lambda x, y: (g[0, 0] * x + g[0, 1] * y,
                                                   g[1, 0] * x + g[1, 1] * y))
        grad = spaces_for(m).displacement_gradients(u)[0]
        np.testing.assert_allclose(grad, g, rtol=1e-13)
        e = 0.5 * (g + g.T)
        lam, mu = 121.1538e3, 80.7692e3
        sigma = lam * np.trace(e) * np.eye(2) + 2 * mu * e
        voigt = MAT.elasticity_matrix @ np.array([e[0, 0], e[1, 1], 2 * e[0, 1]])
        np.testing.assert_allclose(voigt, [sigma[0, 0], sigma[1, 1], sigma[0, 1]], rtol=1e-13)

    def test_patch_interior_reproduced(self):
        m = build_rectangle_mesh(1, 1, 0.25)
        lin = lambda x, y: (1e-3 * x + 2e-4 * y, -3e-4 * x + 5e-4 * y)
        exact = interpolate_p1_vector(m, lin)
        b = np.unique(m.boundary_edges)
        dofs = np.concatenate([2 * b, 2 * b + 1])
        system = assemble_elasticity(m, FieldState.zeros(m, 0.1), MAT)
        u = solve_spd(apply_dirichlet(system, dofs, exact[dofs]))
        np.testing.assert_allclose(u, exact, rtol=1e-9, atol=1e-15)

    def test_fully_broken_has_no_stiffness(self):
        m = build_rectangle_mesh(1, 1, 0.5)
        s = FieldState.zeros(m, 0.1).replace(c=np.ones(spaces_for(m).n_c))
        intact = abs(assemble_elasticity(m, FieldState.zeros(m, 0.1), MAT).matrix).max()
        assert abs(assemble_elasticity(m, s, MAT).matrix).max() <= 1e-20 * intact

    def test_rigid_translation_in_nullspace(self):
        m = build_rectangle_mesh(1, 1, 0.25)
        st_ = random_state(m)
        k = assemble_elasticity(m, st_, MAT).matrix
        for comp in (0, 1):
            t = np.zeros(spaces_for(m).n_u)
            t[comp::2] = 1.0
            assert np.abs(k @ t).max() <= 1e-10 * abs(k).max()

    def test_symmetric(self):
        m = build_rectangle_mesh(1, 1, 0.25)
        k = assemble_elasticity(m, random_state(m), MAT).matrix
        assert abs(k - k.T).max() <= 1e-10 * abs(k).max()

    def test_size_mismatch(self):
        m = build_rectangle_mesh(1, 1, 0.5)
        with pytest.raises(ValueError):
            assemble_elasticity(m, FieldState.zeros(m, 0.1).replace(c=np.zeros(3)), MAT)


class TestPhaseField:
    def test_unloaded_stays_intact(self):
        m = build_rectangle_mesh(1, 1, 0.25)
        c = solve_spd(assemble_phasefield(m, FieldState.zeros(m, 0.1), MAT))
        np.testing.assert_array_equal(c, 0.0)

    @pytest.mark.parametrize("h_val", [10.0, 1e3, 1e6])
    def test_uniform_driving_closed_form(self, h_val):
        m = single_triangle()
        s = FieldState.zeros(m, 0.1)
        s = s.replace(H=np.full_like(s.H, h_val))
        c = solve_spd(assemble_phasefield(m, s, MAT))
        expect = 2 * h_val / (MAT.g_c / 0.1 + 2 * h_val)
        np.testing.assert_allclose(c, expect, rtol=1e-12)
        if h_val == 1e6:
            assert c.min() > 0.9999

    def test_decay_length_scales_with_eps(self):
        mesh = build_rectangle_mesh(1.0, 0.02, 0.005)
        s = spaces_for(mesh)
        pairs = mesh.tagged_edges("left")
        dofs = np.concatenate([np.unique(pairs), mesh.n_vertices + mesh.edge_index(pairs)])
        bottom = mesh.tagged_vertices("bottom")
        xs = mesh.vertices[bottom, 0]
        order = np.argsort(xs)
        lengths = []
        for eps in (0.05, 0.1):
            state = FieldState.zeros(mesh, eps)
            c = solve_spd(apply_dirichlet(assemble_phasefield(s, state, MAT), dofs, 1.0))
            profile = c[bottom][order]
            # 1D oracle on [0, 1] with zero flux at x = 1
            exact = np.cosh((1 - xs[order]) / eps) / np.cosh(1 / eps)
            np.testing.assert_allclose(profile, exact, atol=2e-3)
            lengths.append(np.interp(-math.exp(-1.0), -profile, xs[order]))
        assert lengths[1] / lengths[0] == pytest.approx(2.0, rel=0.05)

    def test_nonpositive_eps_rejected(self):
        m = single_triangle()
        with pytest.raises(ValueError):
            assemble_phasefield(m, FieldState.zeros(m, 0.1).replace(eps=np.array([[0.1, 0.0, -0.1]])),
                                MAT)

    def test_driving_shape_checked(self):
        m = single_triangle()
        with pytest.raises(ValueError):
            assemble_phasefield(m, FieldState.zeros(m, 0.1), MAT, driving=np.zeros((1, 2)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_spd_for_any_positive_fields(self, seed):
        m = build_rectangle_mesh(1, 1, 0.34)
        rng = np.random.default_rng(seed)
        st_ = random_state(m, seed).replace(
            eps=rng.uniform(1e-3, 1.0, (m.n_cells, 3)),
            H=rng.exponential(1e3, (m.n_cells, spaces_for(m).n_quad)) * rng.integers(0, 2))
        a = assemble_phasefield(m, st_, MAT).matrix.toarray()
        np.testing.assert_allclose(a, a.T, rtol=0, atol=1e-10 * np.abs(a).max())
        assert np.linalg.eigvalsh(a).min() > 0


class TestDirichlet:
    def system(self):
        return LinearSystem(sp.csr_matrix(np.array([[4.0, 1.0], [1.0, 3.0]])), np.array([1.0, 2.0]))

    def test_empty(self):
        s = self.system()
        assert apply_dirichlet(s, [], []) is s

    def test_all_constrained(self):
        g = np.array([0.3, -0.7])
        x = solve_spd(apply_dirichlet(self.system(), [0, 1], g))
        np.testing.assert_allclose(x, g, rtol=1e-14)

    def test_two_by_two_by_hand(self):
        # x0 = 0.5 fixed; row 1: 1*0.5 + 3 x1 = 2 -> x1 = 0.5
        out = apply_dirichlet(self.system(), [0], [0.5])
        x = solve_spd(out)
        np.testing.assert_allclose(x, [0.5, 0.5], rtol=1e-14)
        a = out.matrix.toarray()
        np.testing.assert_array_equal(a, [[1.0, 0.0], [0.0, 3.0]])
        np.testing.assert_array_equal(out.constrained_dofs, [0])

    def test_conflicting_duplicates(self):
        with pytest.raises(ValueError):
            apply_dirichlet(self.system(), [1, 1], [0.0, 1.0])

    def test_consistent_duplicates(self):
        x = solve_spd(apply_dirichlet(self.system(), [1, 1], [2.0, 2.0]))
        assert x[1] == 2.0

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            apply_dirichlet(self.system(), [2], [0.0])


class TestSolve:
    def test_identity(self):
        b = np.arange(1.0, 6.0)
        np.testing.assert_allclose(solve_spd(LinearSystem(sp.identity(5, format="csr"), b)), b)

    def test_two_by_two(self):
        x = solve_spd(LinearSystem(sp.csr_matrix([[2.0, 1.0], [1.0, 2.0]]), np.array([3.0, 3.0])))
        np.testing.assert_allclose(x, [1.0, 1.0], rtol=1e-14)

    @pytest.mark.parametrize("seed", range(3))
    def test_random_spd_against_dense(self, seed):
        rng = np.random.default_rng(seed)
        q = rng.normal(size=(50, 50))
        a = q @ q.T + 50 * np.eye(50)
        b = rng.normal(size=50)
        x = solve_spd(LinearSystem(sp.csr_matrix(a), b))
        assert np.abs(x - np.linalg.solve(a, b)).max() <= 1e-8
        assert np.linalg.norm(a @ x - b) <= 1e-10 * np.linalg.norm(b)

    def test_negative_definite_detected(self):
        with pytest.raises(NumericalFailure):
            solve_spd(LinearSystem(sp.csr_matrix(-np.eye(3)), np.ones(3)))

    def test_singular_detected(self):
        with pytest.raises(NumericalFailure):
            solve_spd(LinearSystem(sp.csr_matrix(np.zeros((2, 2))), np.ones(2)))


class TestEnergy:
    mesh = build_rectangle_mesh(1, 1, 0.25)

    @pytest.mark.parametrize("eps0", [0.05, 0.1, 0.3])
    def test_intact_closed_form(self, eps0):
        e = total_energy(self.mesh, FieldState.zeros(self.mesh, eps0), MAT)
        assert e == pytest.approx(MAT.g_c * MAT.eta / (2 * eps0) + MAT.beta * eps0, rel=1e-12)

    def test_closed_form_minimiser(self):
        def energy(e0):
            return total_energy(self.mesh, FieldState.zeros(self.mesh, e0), MAT)

        grid = np.linspace(0.05, 0.2, 301)
        best = grid[np.argmin([energy(g) for g in grid])]
        assert best == pytest.approx(0.1, abs=1e-3)
        assert math.sqrt(MAT.eta * MAT.g_c / (2 * MAT.beta)) == pytest.approx(0.1, rel=1e-14)

    def test_pure_shear(self):
        gamma = 1e-3
        s = FieldState.zeros(self.mesh, 0.1).replace(
            u=interpolate_p1_vector(self.mesh, lambda x, y: (gamma * y, 0 * x)))
        base = total_energy(self.mesh, FieldState.zeros(self.mesh, 0.1), MAT)
        assert total_energy(self.mesh, s, MAT) - base == pytest.approx(
            MAT.mu * gamma**2 / 2, rel=1e-10)

    def test_quadrature_insensitive(self):
        m = tag_interior_segment(build_rectangle_mesh(1, 1, 0.125), (0, 0.5), (0.5, 0.5), "crack")
        c = np.clip(interpolate_p2(m, lambda x, y: np.exp(-np.abs(y - 0.5) / 0.1)
                                   * (x < 0.6)), 0, 1)
        s = FieldState.zeros(m, 0.1).replace(c=c, u=random_state(m).u)
        e4 = total_energy(m, s, MAT)
        e6 = total_energy(m, s, MAT, quad_degree=6)
        assert abs(e4 - e6) <= 1e-8 * abs(e6)
        # with a spatial length field the rational term is no longer integrated exactly
        s = s.replace(eps=epsilon_field(m, c, MAT))
        e4 = total_energy(m, s, MAT)
        e6 = total_energy(m, s, MAT, quad_degree=6)
        assert abs(e4 - e6) <= 1e-4 * abs(e6)


class TestDirectionalDerivatives:
    mesh = build_rectangle_mesh(1.5, 1, 0.5)   # 32 cells

    @pytest.mark.parametrize("seed", range(4))
    def test_displacement_block(self, seed):
        m = self.mesh
        s = random_state(m, seed)
        rng = np.random.default_rng(100 + seed)
        du = rng.normal(scale=1e-3, size=s.u.shape)
        t = 1e-5
        fd = (total_energy(m, s.replace(u=s.u + t * du), MAT)
              - total_energy(m, s.replace(u=s.u - t * du), MAT)) / (2 * t)
        an = internal_forces(m, s, MAT) @ du
        assert fd == pytest.approx(an, rel=1e-6)

    @pytest.mark.parametrize("seed", range(4))
    def test_phasefield_block(self, seed):
        m = self.mesh
        s = random_state(m, seed)
        rng = np.random.default_rng(200 + seed)
        dc = rng.normal(size=s.c.shape)
        t = 1e-5
        fd = (total_energy(m, s.replace(c=s.c + t * dc), MAT)
              - total_energy(m, s.replace(c=s.c - t * dc), MAT)) / (2 * t)
        psi = cell_strain_energy(m, s.u, MAT)
        driving = np.broadcast_to(psi[:, None], s.H.shape)
        an = phasefield_residual(m, s, MAT, driving) @ dc
        assert fd == pytest.approx(an, rel=1e-6)


class TestReaction:
    def test_zero_displacement(self):
        m = build_rectangle_mesh(1, 1, 0.25)
        assert reaction_force(m, FieldState.zeros(m, 0.1), MAT, "top") == 0.0

    def test_uniaxial_stretch(self):
        m = build_rectangle_mesh(2.0, 1.0, 0.25)
        e = 1e-3
        s = FieldState.zeros(m, 0.1).replace(
            u=interpolate_p1_vector(m, lambda x, y: (0 * x, e * y)))
        force = reaction_force(m, s, MAT, "top")
        assert force == pytest.approx((MAT.lam + 2 * MAT.mu) * e * 2.0, rel=1e-10)

    def test_single_element(self):
        m = single_triangle()
        e = 1e-3
        s = FieldState.zeros(m, 0.1).replace(u=interpolate_p1_vector(m, lambda x, y: (e * x, 0 * y)))
        # hypotenuse traction (lam + 2 mu) e in total, minus half of the left-edge
        # traction lumped at vertex (0, 1)
        assert reaction_force(m, s, MAT, "right", component=0) == pytest.approx(
            (MAT.lam + 2 * MAT.mu) * e * 0.5, rel=1e-10)
        f = internal_forces(m, s, MAT)
        assert f[0::2].sum() == pytest.approx(0.0, abs=1e-9)

    def test_unknown_tag(self):
        m = single_triangle()
        with pytest.raises(KeyError):
            reaction_force(m, FieldState.zeros(m, 0.1), MAT, "nowhere")

    def test_global_balance(self):
        m = tag_interior_segment(build_rectangle_mesh(1, 1, 0.1), (0, 0.5), (0.5, 0.5), "crack")
        s = spaces_for(m)
        c = np.clip(interpolate_p2(m, lambda x, y: np.exp(-np.abs(y - 0.5) / 0.1) * (x < 0.55)), 0, 1)
        state = FieldState.zeros(m, 0.1).replace(c=c)
        bot, top = m.tagged_vertices("bottom"), m.tagged_vertices("top")
        dofs = np.concatenate([2 * bot, 2 * bot + 1, 2 * top, 2 * top + 1])
        vals = np.concatenate([np.zeros(2 * len(bot)), np.zeros(len(top)), np.full(len(top), 1e-3)])
        u = solve_spd(apply_dirichlet(assemble_elasticity(s, state, MAT), dofs, vals))
        state = state.replace(u=u)
        top_f = reaction_force(m, state, MAT, "top")
        bot_f = reaction_force(m, state, MAT, "bottom")
        assert top_f > 0
        assert top_f == pytest.approx(-bot_f, rel=1e-8)


def test_function_spaces_dimensions():
    m = build_rectangle_mesh(1, 1, 0.5)
    s = FunctionSpaces(m)
    assert s.n_u == 2 * m.n_vertices
    assert s.n_c == m.n_vertices + m.n_edges
    assert s.c_dofs.shape == (m.n_cells, 6)
    assert s.dx.sum() == pytest.approx(1.0)
    assert spaces_for(m) is spaces_for(m)
