import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egl.diagnostics import (
    CSV_COLUMNS,
    grad_sup_norm,
    growth_fit,
    hessian_sup_norm,
    kn_invariant,
    l2_norm,
    lp_norm,
    measure,
    outer_shell_sum,
    shell_energy,
    superlinear_metric,
    superlinear_trace,
    symmetry_residual,
    theta_star_spectral,
)
from egl.initial_data import Theorem1Params, build_theorem1_data, stationary_theta_star
from egl.spectral import GridField, SpectralField, dealias, grid_points, grid_to_spectral, shell_projectors

from conftest import random_spectral


class TestGradSup:
    def test_theta_star(self):
        assert abs(grad_sup_norm(theta_star_spectral(64)) - np.sqrt(2)) < 1e-6

    def test_zero(self):
        assert grad_sup_norm(SpectralField.zeros(16)) == 0

    def test_scaled_cosine(self):
        assert abs(grad_sup_norm(SpectralField.from_modes(32, {(1, 0): 2.5})) - 5) < 1e-6

    def test_refinement_stable(self, rng):
        s = dealias(random_spectral(64, rng, kmax=6))
        a, b = grad_sup_norm(s, 2), grad_sup_norm(s, 4)
        assert abs(a - b) / b <= 1e-3


class TestLp:
    def test_theta_star_l2(self):
        assert abs(lp_norm(stationary_theta_star(64), 2) - 2 * np.pi) < 1e-8

    def test_sup(self):
        assert lp_norm(GridField(np.ones((8, 8))), np.inf) == 1

    def test_rejects_p(self):
        with pytest.raises(ValueError):
            lp_norm(GridField(np.ones((8, 8))), 0.5)

    def test_psi_l4_scaling(self):
        ratios = []
        for d in (0.1, 0.05, 0.025):
            f = build_theorem1_data(256, Theorem1Params(delta=d))
            psi = GridField(f.values - stationary_theta_star(256).values)
            ratios.append(lp_norm(psi, 4) / d**0.25)
        print("||psi0||_4 / delta^(1/4):", ratios)
        assert max(ratios) / min(ratios) < 3


class TestShellQuantities:
    def test_kn_examples(self):
        assert kn_invariant(theta_star_spectral(16)) == 0
        s = SpectralField.from_modes(16, {(2, 1): 0.5})
        assert abs(kn_invariant(s) - 0.4) < 1e-15

    def test_shell_energy_examples(self):
        assert abs(shell_energy(theta_star_spectral(16)) - 1) < 1e-15
        assert shell_energy(SpectralField.zeros(16)) == 0

    @given(seed=st.integers(0, 2**32 - 1), n=st.sampled_from([8, 16, 32]))
    @settings(max_examples=30, deadline=None)
    def test_l2_shell_identity(self, seed, n):
        s = random_spectral(n, np.random.default_rng(seed))
        lhs = l2_norm(s) ** 2
        rhs = (2 * np.pi) ** 2 * (shell_energy(s) + outer_shell_sum(s))
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, lhs)

    def test_psi_norm_decomposition(self):
        s = grid_to_spectral(build_theorem1_data(256, Theorem1Params(delta=0.05)))
        psi = s - theta_star_spectral(256)
        p1, p2 = shell_projectors(psi)
        # psi splits orthogonally over the shells
        assert abs(l2_norm(psi) ** 2 - l2_norm(p1) ** 2 - l2_norm(p2) ** 2) <= 1e-8
        assert l2_norm(psi) <= l2_norm(shell_projectors(s)[1]) + l2_norm(p1) + 1e-8


class TestSymmetryResidual:
    def test_theta_star(self):
        f = stationary_theta_star(16)
        assert symmetry_residual(f, "even") < 1e-15 and symmetry_residual(f, "rot4") < 1e-15

    def test_sine(self):
        x, _ = grid_points(16)
        assert abs(symmetry_residual(GridField(np.sin(x)), "even") - 2) < 1e-12

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            symmetry_residual(stationary_theta_star(8), "mirror")


class TestHessian:
    def test_zero(self):
        assert hessian_sup_norm(SpectralField.zeros(16)) == 0

    def test_single_mode(self):
        # Delta^-1 cos x = cos x; the (alpha, alpha) entry (d_x + d_y)^2 cos x peaks at 1
        s = SpectralField.from_modes(32, {(1, 0): 0.5})
        assert abs(hessian_sup_norm(s) - 1) < 1e-9


class TestSuperlinear:
    def test_constant(self):
        t = np.linspace(0, 4, 9)
        assert abs(superlinear_metric(zip(t, np.full_like(t, 3.0))) - 3 / 4) < 1e-15

    def test_identity_exact(self):
        t = np.linspace(0, 7, 15)
        assert superlinear_metric(zip(t, t)) == 0.5

    def test_exponential(self):
        t = np.linspace(0, 4, 4001)
        assert abs(superlinear_metric(zip(t, np.exp(t))) - (np.exp(4) - 1) / 16) < 1e-5

    def test_errors(self):
        with pytest.raises(ValueError):
            superlinear_metric([(0.0, 1.0)])
        with pytest.raises(ValueError):
            superlinear_metric([(0.0, 1.0), (0.0, 2.0)])

    def test_trace(self):
        tr = superlinear_trace([(0, 1), (1, 1), (2, 1)])
        assert tr == [(1.0, 1.0), (2.0, 0.5)]


class TestGrowthFit:
    def test_exponential(self):
        t = np.linspace(1, 4, 13)
        fit = growth_fit(zip(t, 0.3 * np.exp(t / 2)), (1, 4))
        assert abs(fit.rate - 0.5) < 1e-12 and abs(fit.r2 - 1) < 1e-12
        assert abs(fit.prefactor - 0.3) < 1e-12

    def test_constant(self):
        t = np.linspace(0, 4, 9)
        fit = growth_fit(zip(t, np.full_like(t, 2.0)), (1, 4))
        assert abs(fit.rate) < 1e-12

    def test_errors(self):
        t = np.linspace(0, 4, 9)
        with pytest.raises(ValueError):
            growth_fit(zip(t, t - 2), (1, 4))
        with pytest.raises(ValueError):
            growth_fit(zip(t, t + 1), (3.9, 4))


def test_record_columns():
    rec = measure(theta_star_spectral(16), 0.0)
    assert tuple(rec.__dataclass_fields__) == CSV_COLUMNS
    assert rec.psi_l2 == 0 and rec.hessian_sup == 0
    assert all(np.isfinite(rec.row()))
