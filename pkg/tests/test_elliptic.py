"""Divergence-form solver: exactness, convergence, symmetry, validation."""

import math

import numpy as np
import pytest

from ellinfo.elliptic import (ELLIPTICITY_FLOOR, Conductivity,
                              DivergenceFormOperator, assemble,
                              check_identifiability, solve_dirichlet)
from ellinfo.fixtures import FIXTURE_NAMES, exact_solution, fixture_data, fixture_domain
from ellinfo.grids import (DomainKind, DomainSpec, ScalarField, build_grid,
                           inner_l2, norm_l2, random_smooth_field)


def square(n=17):
    return build_grid(DomainSpec(DomainKind.SQUARE, n))


def fixture_grid(name, resolution):
    return build_grid(fixture_domain(name, resolution))


def scaled(field, factor):
    return ScalarField(field.grid, factor * field.values)


class TestExactSolutions:
    """Every shipped fixture has a quadratic base solution that central
    differences reproduce to solver precision."""

    @pytest.mark.parametrize("name", FIXTURE_NAMES)
    def test_unit_conductivity_recovers_closed_form(self, name):
        grid = fixture_grid(name, 33)
        f, g = fixture_data(name, grid)
        u = solve_dirichlet(Conductivity.constant(grid), f, g)
        expected = exact_solution(name, grid)
        assert norm_l2(ScalarField(grid, u.values - expected.values)) <= 1e-10

    def test_boundary_values_are_imposed_exactly(self):
        grid = fixture_grid("square_ex1", 17)
        f, g = fixture_data("square_ex1", grid)
        u = solve_dirichlet(Conductivity.constant(grid), f, g)
        np.testing.assert_array_equal(
            u.values[grid.boundary_ids], g.values[grid.boundary_ids])


class TestManufacturedConvergence:
    """A non-polynomial forced problem converges at second order."""

    @staticmethod
    def _error(n):
        grid = square(n)
        exact = np.sin(math.pi * (grid.x - 1.0)) * np.sin(math.pi * (grid.y - 1.0))
        f = ScalarField(grid, -2.0 * math.pi**2 * exact)
        u = solve_dirichlet(Conductivity.constant(grid), f)
        return norm_l2(ScalarField(grid, u.values - exact))

    def test_error_quarters_under_mesh_halving(self):
        e_coarse, e_fine = self._error(17), self._error(33)
        ratio = e_coarse / e_fine
        assert 3.4 <= ratio <= 4.6


class TestOperatorAlgebra:
    """Forward application, inversion, and the weighted symmetry of the
    zero-boundary solution operator."""

    def test_apply_operator_inverts_solve(self):
        grid = square(17)
        rng = np.random.default_rng(12)
        f = random_smooth_field(grid, rng, apply_collar=False)
        g = ScalarField(grid, grid.x + 0.5 * grid.y)
        theta = Conductivity.from_perturbation(
            grid, scaled(random_smooth_field(grid, rng, apply_collar=True), 0.1), eta=None)
        op = assemble(theta)
        resid = op.apply_operator(op.solve(f, g))
        np.testing.assert_allclose(
            resid.values[grid.interior_ids], f.values[grid.interior_ids],
            rtol=0.0, atol=1e-10)

    def test_zero_boundary_inverse_is_self_adjoint(self):
        grid = square(15)
        rng = np.random.default_rng(3)
        theta = Conductivity.from_perturbation(
            grid, scaled(random_smooth_field(grid, rng), 0.2), eta=None)
        op = assemble(theta)
        w1 = random_smooth_field(grid, rng, apply_collar=False)
        w2 = random_smooth_field(grid, rng, apply_collar=False)
        lhs = inner_l2(op.apply_inverse(w1), w2)
        rhs = inner_l2(w1, op.apply_inverse(w2))
        assert abs(lhs - rhs) <= 1e-8 * max(abs(lhs), 1.0)

    def test_inverse_quadratic_form_is_negative(self):
        """The operator is negative definite, so <w, V w> < 0 for w != 0."""
        grid = square(15)
        w = random_smooth_field(grid, np.random.default_rng(4), apply_collar=False)
        op = assemble(Conductivity.constant(grid))
        assert inner_l2(w, op.apply_inverse(w)) < 0.0

    def test_cg_mode_matches_direct(self):
        grid = square(25)
        rng = np.random.default_rng(8)
        theta = Conductivity.from_perturbation(
            grid, scaled(random_smooth_field(grid, rng), 0.15), eta=None)
        f = random_smooth_field(grid, rng, apply_collar=False)
        u_direct = assemble(theta, mode="direct").apply_inverse(f)
        op_cg = assemble(theta, mode="cg", tol=1e-12)
        u_cg = op_cg.apply_inverse(f)
        assert op_cg.last_stats["mode"] == "cg"
        assert op_cg.last_stats["iterations"] > 0
        np.testing.assert_allclose(u_cg.values, u_direct.values, atol=1e-8)

    def test_unknown_mode_rejected(self):
        grid = square(15)
        with pytest.raises(ValueError, match="mode"):
            assemble(Conductivity.constant(grid), mode="qmr")


class TestDiscreteSineOracle:
    """Product sine fields are exact eigenvectors of the unit-conductivity
    operator on the square, with the classical five-point eigenvalues."""

    @pytest.mark.parametrize("j,k", [(1, 1), (2, 3), (5, 5)])
    def test_inverse_scales_sine_modes_exactly(self, j, k):
        grid = square(17)
        h = grid.h_mesh
        mode = np.sin(j * math.pi * (grid.x - 1.0)) * np.sin(k * math.pi * (grid.y - 1.0))
        lam = (4.0 / h**2) * (math.sin(j * math.pi * h / 2.0) ** 2
                              + math.sin(k * math.pi * h / 2.0) ** 2)
        op = assemble(Conductivity.constant(grid))
        u = op.apply_inverse(ScalarField(grid, mode))
        np.testing.assert_allclose(u.values, -mode / lam, atol=1e-12)


class TestConductivityValidation:
    """Admissibility checks: ellipticity floor, boundary trace, budget."""

    def test_ellipticity_floor_enforced(self):
        grid = square(15)
        with pytest.raises(ValueError, match="ellipticity floor"):
            Conductivity(grid.field(ELLIPTICITY_FLOOR - 0.01))

    def test_boundary_trace_must_be_one(self):
        grid = square(15)
        with pytest.raises(ValueError, match="boundary"):
            Conductivity(grid.field(1.1))

    def test_smoothness_budget_enforced(self):
        grid = square(15)
        bump = scaled(random_smooth_field(grid, np.random.default_rng(5)), 0.3)
        with pytest.raises(ValueError, match="eta"):
            Conductivity.from_perturbation(grid, bump, eta=1e-6)

    def test_non_finite_values_rejected(self):
        grid = square(15)
        vals = np.ones(grid.n_nodes)
        vals[grid.interior_ids[0]] = np.nan
        with pytest.raises(ValueError, match="finite"):
            Conductivity(ScalarField(grid, vals))

    def test_with_bump_is_admissible(self):
        grid = square(33)
        theta = Conductivity.with_bump(grid, (1.6, 1.4), 0.28, 0.15)
        assert theta.min_value > ELLIPTICITY_FLOOR
        assert theta.perturbation_norm() > 0.0


class TestIdentifiability:
    """The pointwise lower bound c0_hat = min(Lap u + mu |grad u|^2)."""

    def test_square_base_matches_closed_form(self):
        grid = fixture_grid("square_ex1", 33)
        f, g = fixture_data("square_ex1", grid)
        rep = check_identifiability(Conductivity.constant(grid), f, g, mu=4.0)
        h = 1.0 / 32.0
        expected = 2.0 + 4.0 * 2.0 * (1.0 + h) ** 2
        np.testing.assert_allclose(rep.c0_hat, expected, rtol=1e-10)
        assert rep.passes

    def test_disk_base_matches_closed_form(self):
        grid = fixture_grid("disk_ex2", 33)
        f, g = fixture_data("disk_ex2", grid)
        rep = check_identifiability(Conductivity.constant(grid), f, g, mu=4.0)
        dr = 2.0 / 65.0
        np.testing.assert_allclose(rep.c0_hat, 2.0 + 4.0 * (dr / 2.0) ** 2, rtol=1e-3)
        assert rep.passes

    def test_harmonic_base_needs_gradient_term(self):
        """With f = 0 the Laplacian term vanishes, so mu = 0 fails and the
        gradient term alone must carry the bound."""
        grid = fixture_grid("saddle", 33)
        f, g = fixture_data("saddle", grid)
        theta = Conductivity.constant(grid)
        flat = check_identifiability(theta, f, g, mu=0.0, c0_min=1e-6)
        assert not flat.passes
        assert abs(flat.c0_hat) <= 1e-9
        lifted = check_identifiability(theta, f, g, mu=4.0, c0_min=1e-6)
        h = 1.0 / 32.0
        np.testing.assert_allclose(lifted.c0_hat, 32.0 * (1.0 + h) ** 2, rtol=1e-10)
        assert lifted.passes

    def test_report_records_inputs(self):
        grid = fixture_grid("square_ex1", 17)
        f, g = fixture_data("square_ex1", grid)
        op = DivergenceFormOperator(Conductivity.constant(grid))
        rep = check_identifiability(op.theta, f, g, mu=2.0, c0_min=1.5, op=op)
        assert rep.mu == 2.0
        assert rep.c0_min == 1.5
        assert rep.passes == (rep.c0_hat > 1.5)
