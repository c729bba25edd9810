import math

import numpy as np
import pytest

from formalflow import (
    BrownianPath,
    CoefficientFamily,
    ShapeError,
    TimeGrid,
    UnsupportedCaseError,
    fundamental,
    identity,
    sample_path,
    solve_chain,
    variation_of_constants,
)
from conftest import random_coefficients


def deterministic_path(grid, m=1):
    return BrownianPath.from_increments(grid, np.zeros((grid.n_steps, m)))


class TestFundamental:
    def test_zero_coefficients_give_identity(self):
        co = CoefficientFamily.constant_scalar([0.0], [0.0])
        grid = TimeGrid(0.0, 1.0, 8)
        fund = fundamental(co, deterministic_path(grid))
        for i in range(9):
            for j in range(i + 1):
                assert np.array_equal(fund.matrix(i, j), np.eye(1))

    def test_scalar_exponential_limit(self):
        alpha = 0.9
        co = CoefficientFamily.constant_scalar([alpha])
        grid = TimeGrid(0.0, 1.0, 1024)
        fund = fundamental(co, deterministic_path(grid))
        got = fund.matrix(1024, 256)[0, 0]
        assert got == pytest.approx(math.exp(alpha * 0.75), rel=2e-3)

    def test_same_ordered_product_is_bitwise_stable(self, rng):
        co = random_coefficients(rng, 2, 3, 2)
        grid = TimeGrid(0.0, 1.0, 32)
        path = sample_path(grid, 2, seed=17)
        fund = fundamental(co, path)
        assert np.array_equal(fund.matrix(30, 5), fund.matrix(30, 5))

    def test_evolution_identity_at_tolerance(self, rng):
        co = random_coefficients(rng, 2, 3, 2)
        grid = TimeGrid(0.0, 1.0, 64)
        path = sample_path(grid, 2, seed=21)
        fund = fundamental(co, path)
        lhs = fund.matrix(60, 20) @ fund.matrix(20, 5)
        rhs = fund.matrix(60, 5)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(1.0, np.linalg.norm(rhs))


class TestVariationOfConstants:
    def test_zero_forcing_gives_zero(self):
        co = CoefficientFamily.constant_scalar([1.0, 0.0, 0.0])
        grid = TimeGrid(0.0, 1.0, 16)
        path = deterministic_path(grid)
        sol = solve_chain(co, identity(3, 1), path)
        for n in (2, 3):
            traj = variation_of_constants(n, co, sol.states, path)
            assert all(t.is_zero for t in traj)

    def test_pure_noise_forcing_is_brownian_sum(self):
        beta2 = 0.25
        co = CoefficientFamily.constant_scalar([0.0, 0.0], [0.0, beta2])
        grid = TimeGrid(0.0, 1.0, 128)
        path = sample_path(grid, 1, seed=33)
        sol = solve_chain(co, identity(2, 1), path)
        traj = variation_of_constants(2, co, sol.states, path)
        # chain and quadrature accumulate the same loads in the same order
        for v, s in zip(traj, sol.states):
            assert np.array_equal(v.entries, s.component(2).entries)
        got = traj[-1].entries.ravel()[0]
        assert got == pytest.approx(beta2 * path.increments.sum(), rel=1e-13)

    def test_scalar_quadratic_matches_chain(self):
        co = CoefficientFamily.constant_scalar([1.0, 0.5])
        grid = TimeGrid(0.0, 1.0, 256)
        path = deterministic_path(grid)
        sol = solve_chain(co, identity(2, 1), path)
        traj = variation_of_constants(2, co, sol.states, path)
        for v, s in zip(traj, sol.states):
            ref = np.linalg.norm(s.component(2).entries)
            assert np.linalg.norm(v.entries - s.component(2).entries) <= 1e-9 * max(1.0, ref)

    def test_scalar_quadratic_converges_to_closed_form(self):
        from formalflow import quadratic_chain_s2_closed_form

        alpha, gamma = 1.0, 0.5
        co = CoefficientFamily.constant_scalar([alpha, gamma])
        target = quadratic_chain_s2_closed_form(alpha, gamma, 1.0)
        errs = []
        for n_steps in (128, 256, 512):
            grid = TimeGrid(0.0, 1.0, n_steps)
            path = deterministic_path(grid)
            sol = solve_chain(co, identity(2, 1), path)
            traj = variation_of_constants(2, co, sol.states, path)
            errs.append(abs(traj[-1].entries.ravel()[0] - target))
        assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.15)
        assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.15)

    def test_multidimensional_chain_equivalence(self, rng):
        # random drift of order 3, diffusion only in degrees >= 2
        from formalflow import DiffusionFamily, DiffusionMap

        dy, m, order = 2, 2, 3
        from conftest import random_mapping

        a = random_mapping(rng, order, dy, dy, magnitude=0.4)
        b_comps = [DiffusionMap.zero(1, dy, dy, m)]
        for k in (2, 3):
            b_comps.append(
                DiffusionMap(k, dy, dy, m, 0.4 * rng.standard_normal((dy,) + (dy,) * k + (m,)))
            )
        co = CoefficientFamily.constant(a, DiffusionFamily(order, dy, m, tuple(b_comps)))
        grid = TimeGrid(0.0, 1.0, 64)
        path = sample_path(grid, m, seed=12)
        sol = solve_chain(co, identity(order, dy), path)
        for n in (2, 3):
            traj = variation_of_constants(n, co, sol.states, path)
            for v, s in zip(traj, sol.states):
                ref = np.linalg.norm(s.component(n).entries)
                assert np.linalg.norm(v.entries - s.component(n).entries) <= 1e-9 * max(1.0, ref)

    def test_rejects_degree_one_noise(self, rng):
        co = CoefficientFamily.constant_scalar([1.0, 0.5], [0.5, 0.0])
        grid = TimeGrid(0.0, 1.0, 16)
        path = sample_path(grid, 1, seed=0)
        sol = solve_chain(co, identity(2, 1), path)
        with pytest.raises(UnsupportedCaseError):
            variation_of_constants(2, co, sol.states, path)

    def test_rejects_degree_below_two(self):
        co = CoefficientFamily.constant_scalar([1.0, 0.5])
        grid = TimeGrid(0.0, 1.0, 16)
        path = deterministic_path(grid)
        sol = solve_chain(co, identity(2, 1), path)
        with pytest.raises(ShapeError):
            variation_of_constants(1, co, sol.states, path)
