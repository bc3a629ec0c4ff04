"""Grids, stencil weights, the two cross-section operators, banded solves."""

import numpy as np
import pytest

from lanslab import (
    CHANNEL,
    PIPE,
    BandedSystem,
    Grid1D,
    GridFunction1D,
    PhysicalParams,
    SingularBandedError,
    diffusion_operator,
    make_grid,
    mass_operator,
    solve_banded,
)
from lanslab.operators1d import d1_triples, d2_triples, fd_weights


class TestFdWeights:
    @pytest.mark.parametrize("k", [0, 1, 2, 3])
    def test_exact_on_polynomials(self, k, rng):
        """Weights from m nodes must be exact on degree m-1."""
        for _ in range(20):
            m = int(rng.integers(max(k + 1, 2), 8))
            x = np.sort(rng.uniform(-1, 1, m))
            while np.min(np.diff(x)) < 1e-3:
                x = np.sort(rng.uniform(-1, 1, m))
            x0 = rng.uniform(-1, 1)
            coeffs = rng.normal(size=m)
            w = fd_weights(x, x0, k)
            got = w @ np.polyval(coeffs, x)
            want = np.polyval(np.polyder(coeffs, k), x0) if k else np.polyval(coeffs, x0)
            scale = 1.0 + float(np.abs(w) @ np.abs(np.polyval(coeffs, x)))
            assert abs(got - want) < 1e-10 * scale

    def test_too_few_nodes(self):
        with pytest.raises(ValueError):
            fd_weights([0.0, 1.0], 0.0, 2)

    def test_coincident_nodes(self):
        with pytest.raises(ValueError):
            fd_weights([0.5, 0.5], 0.5, 0)


def test_triples_exact_on_quadratics(rng):
    z = np.sort(rng.uniform(-1, 1, 40))
    while np.min(np.diff(z)) < 5e-3:
        z = np.sort(rng.uniform(-1, 1, 40))
    c2, c1, c0 = 0.7, -1.3, 0.4
    f = c2 * z**2 + c1 * z + c0
    a, b, c = d1_triples(z)
    d1 = a * f[:-2] + b * f[1:-1] + c * f[2:]
    assert np.abs(d1 - (2 * c2 * z[1:-1] + c1)).max() < 1e-12
    a, b, c = d2_triples(z)
    d2 = a * f[:-2] + b * f[1:-1] + c * f[2:]
    assert np.abs(d2 - 2 * c2).max() < 1e-11


class TestGrids:
    def test_channel_endpoints_exact(self):
        g = make_grid(CHANNEL, 33, h=0.7)
        assert g.nodes[0] == -0.7 and g.nodes[-1] == 0.7
        assert g.extent == 0.7

    def test_pipe_starts_on_axis(self):
        g = make_grid(PIPE, 17, a=2.0)
        assert g.nodes[0] == 0.0 and g.nodes[-1] == 2.0

    def test_wall_distance_range(self):
        g = make_grid(CHANNEL, 65)
        assert g.wall_distance[0] == 0.0 and g.wall_distance[-1] == 0.0
        assert abs(g.wall_distance[32] - 1.0) < 1e-15

    def test_small_grid_guard(self):
        with pytest.raises(ValueError):
            make_grid(CHANNEL, 5)
        g = make_grid(CHANNEL, 5, allow_small=True)
        assert g.n == 5

    def test_bad_geometry(self):
        with pytest.raises(ValueError):
            make_grid("duct", 17)

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            Grid1D(np.array([0.0, 0.5, 0.4, 1.0]), PIPE)
        with pytest.raises(ValueError):
            Grid1D(np.array([-1.0, 0.0, 0.9]), CHANNEL)
        with pytest.raises(ValueError):
            Grid1D(np.array([0.1, 0.5, 1.0]), PIPE)

    def test_nodes_read_only(self):
        g = make_grid(CHANNEL, 17)
        with pytest.raises(ValueError):
            g.nodes[0] = 0.0


def test_grid_function_validation():
    g = make_grid(CHANNEL, 17)
    with pytest.raises(ValueError):
        GridFunction1D(g, np.zeros(16))
    with pytest.raises(ValueError):
        GridFunction1D(g, np.full(17, np.nan))


def test_params_default_pressure_gradient():
    p = PhysicalParams(alpha=0.1, nu=2.0, beta=3.0)
    assert p.c == -2.0 * 2.0 * 3.0
    assert PhysicalParams(c=5.0).c == 5.0
    with pytest.raises(ValueError):
        PhysicalParams(alpha=-0.1)
    with pytest.raises(ValueError):
        PhysicalParams(h=0.0)


class TestMassOperator:
    def test_linearity(self, rng):
        g = make_grid(CHANNEL, 33)
        p = PhysicalParams(alpha=0.3)
        rho = GridFunction1D(g, rng.uniform(0, 1, g.n))
        u = GridFunction1D(g, rng.normal(size=g.n))
        v = GridFunction1D(g, rng.normal(size=g.n))
        lhs = mass_operator(GridFunction1D(g, 2 * u.values - 3 * v.values), rho, p).values
        rhs = 2 * mass_operator(u, rho, p).values - 3 * mass_operator(v, rho, p).values
        assert np.abs(lhs - rhs).max() < 1e-12 * max(1.0, np.abs(rhs).max())

    def test_constant_rho_on_cubic(self):
        """M u = u - a^2 rho0 u'' exactly for cubic u on a uniform grid."""
        g = make_grid(CHANNEL, 65)
        p = PhysicalParams(alpha=0.2)
        z = g.nodes
        u = GridFunction1D(g, z**3 - z)
        rho = GridFunction1D(g, np.full(g.n, 0.8))
        got = mass_operator(u, rho, p).values[1:-1]
        want = (z**3 - z - 0.04 * 0.8 * 6 * z)[1:-1]
        assert np.abs(got - want).max() < 1e-12

    def test_wall_rows_pass_through(self, rng):
        g = make_grid(CHANNEL, 17)
        u = GridFunction1D(g, rng.normal(size=g.n))
        rho = GridFunction1D(g, rng.uniform(0, 1, g.n))
        out = mass_operator(u, rho, PhysicalParams()).values
        assert out[0] == u.values[0] and out[-1] == u.values[-1]

    def test_symmetry_in_dual_cell_product(self, rng):
        """Flux form makes M self-adjoint for the dual-width weights."""
        from lanslab import graded_channel_grid

        g = graded_channel_grid(1.0, 41)
        p = PhysicalParams(alpha=0.25)
        rho = GridFunction1D(g, rng.uniform(0, 1, g.n))
        de = 0.5 * (g.nodes[2:] - g.nodes[:-2])
        for _ in range(5):
            u = np.zeros(g.n)
            v = np.zeros(g.n)
            u[1:-1] = rng.normal(size=g.n - 2)
            v[1:-1] = rng.normal(size=g.n - 2)
            mu = mass_operator(GridFunction1D(g, u), rho, p).values
            mv = mass_operator(GridFunction1D(g, v), rho, p).values
            s1 = float(np.sum(de * mu[1:-1] * v[1:-1]))
            s2 = float(np.sum(de * mv[1:-1] * u[1:-1]))
            assert abs(s1 - s2) < 1e-12 * max(1.0, abs(s1))

    def test_grid_mismatch(self, rng):
        p = PhysicalParams()
        u = GridFunction1D(make_grid(CHANNEL, 17), np.zeros(17))
        rho = GridFunction1D(make_grid(CHANNEL, 33), np.zeros(33))
        with pytest.raises(ValueError):
            mass_operator(u, rho, p)


class TestDiffusionOperator:
    def test_zero_cases(self, rng):
        g = make_grid(PIPE, 17)
        u = GridFunction1D(g, rng.normal(size=g.n))
        zero_rho = GridFunction1D(g, np.zeros(g.n))
        out = diffusion_operator(u, zero_rho, PhysicalParams()).values
        assert np.all(out == 0.0)
        rho = GridFunction1D(g, rng.uniform(0, 1, g.n))
        out = diffusion_operator(u, rho, PhysicalParams(nu=0.0)).values
        assert np.all(out == 0.0)

    def test_linearity_in_u(self, rng):
        g = make_grid(CHANNEL, 33)
        p = PhysicalParams(alpha=0.2)
        rho = GridFunction1D(g, rng.uniform(0.1, 1, g.n))
        u = rng.normal(size=g.n)
        v = rng.normal(size=g.n)
        lhs = diffusion_operator(GridFunction1D(g, u + v), rho, p).values
        rhs = (
            diffusion_operator(GridFunction1D(g, u), rho, p).values
            + diffusion_operator(GridFunction1D(g, v), rho, p).values
        )
        assert np.abs(lhs - rhs).max() < 1e-10 * max(1.0, np.abs(rhs).max())

    @pytest.mark.parametrize("geometry", [CHANNEL, PIPE])
    def test_second_order_convergence(self, geometry):
        """Sup-norm error vs the smooth exact operator halves twice per
        refinement."""
        p = PhysicalParams(alpha=0.3, nu=1.0)
        a2 = p.alpha**2

        def exact(z):
            # rho = 1 + z^2/2, u = cos(pi z / 2): symbolic composition
            rho = 1 + 0.5 * z**2
            up = -np.pi / 2 * np.sin(np.pi * z / 2)
            upp = -((np.pi / 2) ** 2) * np.cos(np.pi * z / 2)
            uppp = (np.pi / 2) ** 3 * np.sin(np.pi * z / 2)
            upppp = (np.pi / 2) ** 4 * np.cos(np.pi * z / 2)
            w = rho * up
            wp = z * up + rho * upp
            wpp = up + 2 * z * upp + rho * uppp
            wppp = 3 * upp + 3 * z * uppp + rho * upppp
            if geometry == CHANNEL:
                return p.nu * (wp - a2 * (z * wpp + rho * wppp))
            # cylindrical: nu ((1/r)(r w)' - a2 (1/r)(r rho q')') with
            # q = (1/r)(r w)' ... too long by hand; channel only
            raise NotImplementedError

        if geometry == PIPE:
            # pipe: compare against a fine-grid self-reference instead
            grids = [make_grid(PIPE, n) for n in (65, 129, 257)]
            ref_grid = make_grid(PIPE, 4097)

            def field(g):
                rho = GridFunction1D(g, 1 + 0.5 * g.nodes**2)
                u = GridFunction1D(g, np.cos(np.pi * g.nodes / 2))
                return diffusion_operator(u, rho, p).values

            ref = field(ref_grid)
            errs = []
            for g in grids:
                idx = np.searchsorted(ref_grid.nodes, g.nodes[1:-1])
                sel = np.abs(ref_grid.nodes[idx] - g.nodes[1:-1]) < 1e-12
                got = field(g)[1:-1][sel]
                errs.append(np.abs(got - ref[idx][sel]).max())
        else:
            errs = []
            for n in (65, 129, 257):
                g = make_grid(CHANNEL, n)
                rho = GridFunction1D(g, 1 + 0.5 * g.nodes**2)
                u = GridFunction1D(g, np.cos(np.pi * g.nodes / 2))
                got = diffusion_operator(u, rho, p).values[1:-1]
                errs.append(np.abs(got - exact(g.nodes[1:-1])).max())
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders > 1.6), f"orders {orders}, errors {errs}"


class TestBandedSolve:
    @pytest.mark.parametrize("bw", [1, 2, 3])
    def test_matches_dense_solve(self, bw, rng):
        n = 14
        for _ in range(10):
            a = np.zeros((n, n))
            for i in range(n):
                for j in range(max(0, i - bw), min(n, i + bw + 1)):
                    a[i, j] = rng.normal()
            a += np.eye(n) * (2 * bw + 1)
            b = rng.normal(size=n)
            x = solve_banded(BandedSystem.from_dense(a, b, bw))
            want = np.linalg.solve(a, b)
            assert np.abs(x - want).max() < 1e-11 * max(1.0, np.abs(want).max())

    def test_pivoting_handles_zero_diagonal(self):
        a = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
        b = np.array([1.0, 2.0, 3.0])
        x = solve_banded(BandedSystem.from_dense(a, b, 1))
        assert np.abs(a @ x - b).max() < 1e-14

    def test_singular_raises_with_pivot_index(self):
        a = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]])
        with pytest.raises(SingularBandedError) as err:
            solve_banded(BandedSystem.from_dense(a, np.ones(3), 1))
        assert 0 <= err.value.pivot_index < 3

    def test_validation(self):
        with pytest.raises(ValueError):
            BandedSystem(4, np.zeros((9, 5)), np.zeros(5))
        with pytest.raises(ValueError):
            BandedSystem(1, np.zeros((2, 5)), np.zeros(5))
        with pytest.raises(ValueError):
            BandedSystem(1, np.zeros((3, 5)), np.zeros(4))
