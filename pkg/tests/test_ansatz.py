"""Corrected leading term: smoother, correction solves, gauges, residual."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from narrowgap.ansatz import (BoundaryTraces, ConstantTrace, MonomialTrace,
                              PolyTrace, build_ansatz, correction_coeffs,
                              lame_correction, smoother, smoother_prime, theta,
                              theta_bar_delta, theta_component, zero_trace)
from narrowgap.coefficients import (ConstructionError, LameParameters,
                                    make_lame, make_laplace)
from narrowgap.geometry import FLAT, NarrowRegion, ProfilePair, power_pair


def region(m=2, upper=1.0, lower=0.0, eps=0.01, R0=0.5):
    return NarrowRegion(power_pair(m, upper, lower, R0), eps, 2)


LAME = make_lame(LameParameters(1.0, 1.0), 2)
E1_GAP = BoundaryTraces(ConstantTrace([1.0, 0.0]), zero_trace(2))


# ---------------------------------------------------------------------------
# smoother
# ---------------------------------------------------------------------------

class TestSmoother:
    def test_endpoints_vanish(self):
        assert smoother(0.0) == 0.0
        assert smoother(1.0) == 0.0

    def test_vertex(self):
        assert smoother(0.5) == -0.125

    def test_prime_matches_finite_differences(self):
        t = np.linspace(0, 1, 100)
        h = 1e-6
        fd = (smoother(t + h) - smoother(t - h)) / (2 * h)
        assert np.abs(smoother_prime(t) - fd).max() <= 1e-10

    @given(st.floats(0, 1))
    @settings(max_examples=50)
    def test_reflection_symmetry(self, t):
        assert smoother(t) == pytest.approx(smoother(1 - t), abs=1e-15)


# ---------------------------------------------------------------------------
# correction coefficients
# ---------------------------------------------------------------------------

class TestCorrection:
    def test_laplacian_correction_vanishes_exactly(self):
        r = region()
        tr = BoundaryTraces(ConstantTrace([1.0]), zero_trace(1))
        G = correction_coeffs(make_laplace(2, 1), r, tr, np.array([[0.3]]))
        assert np.all(G == 0.0)

    def test_lame_tangential_row(self):
        # lam = mu = 1, phi^1 - psi^1 = 1, d1 delta = 0.2:
        # G_1 = (lam+mu)/(lam+2mu) * 0.2 * e_n = (0, 2/15...) = (0, 0.13333...)
        r = region(eps=0.01)
        G = correction_coeffs(LAME, r, E1_GAP, np.array([[0.1]]))[0]
        assert G[0] == pytest.approx([0.0, (2.0 / 3.0) * 0.2], abs=1e-15)
        assert np.all(G[1] == 0.0)

    def test_lame_normal_row(self):
        # phi^n - psi^n = 1, d1 delta = 0.2: G_n = (lam+mu)/mu * 0.2 * e_1
        r = region(eps=0.01)
        tr = BoundaryTraces(ConstantTrace([0.0, 1.0]), zero_trace(2))
        G = lame_correction(LameParameters(1.0, 1.0), r, tr, np.array([[0.1]]))[0]
        assert G[1] == pytest.approx([0.4, 0.0], abs=1e-15)
        assert np.all(G[0] == 0.0)

    def test_generic_equals_closed_form_on_random_draws(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            mu = rng.uniform(0.1, 3.0)
            lam = rng.uniform(-mu + 0.05, 3.0)
            m = int(rng.choice([2, 3, 4]))
            r = region(m=m, upper=rng.uniform(0.2, 2), lower=rng.uniform(0, 2),
                       eps=rng.uniform(1e-3, 0.1))
            tr = BoundaryTraces(PolyTrace(rng.normal(size=(2, 3))),
                                PolyTrace(rng.normal(size=(2, 3))))
            xp = rng.uniform(-0.9, 0.9, (5, 1))
            params = LameParameters(lam, mu)
            got = correction_coeffs(make_lame(params, 2), r, tr, xp)
            want = lame_correction(params, r, tr, xp)
            scale = max(np.abs(want).max(), 1e-30)
            assert np.abs(got - want).max() <= 1e-12 * scale

    def test_correction_vanishes_as_lam_approaches_minus_mu(self):
        r = region()
        for d in (1e-3, 1e-6, 1e-9):
            G = lame_correction(LameParameters(-1.0 + d, 1.0), r, E1_GAP,
                                np.array([[0.1]]))[0]
            assert np.abs(G).max() <= d * 0.21


# ---------------------------------------------------------------------------
# data gauges
# ---------------------------------------------------------------------------

class TestGauges:
    def test_equal_traces_vanish(self):
        tr = BoundaryTraces(ConstantTrace([2.0, -1.0]), ConstantTrace([2.0, -1.0]))
        xp = np.linspace(-0.9, 0.9, 7)[:, None]
        assert np.all(theta(tr, xp) == 0.0)
        assert np.all(theta_bar_delta(tr, region(), xp) == 0.0)

    def test_constant_gap_m2_gauges_coincide(self):
        tr = BoundaryTraces(ConstantTrace([3.0, 4.0]), zero_trace(2))
        r = region(m=2)
        xp = np.linspace(-0.9, 0.9, 7)[:, None]
        assert np.allclose(theta(tr, xp), 5.0)
        assert np.allclose(theta_bar_delta(tr, r, xp), 5.0)

    def test_monomial_gap_at_origin(self):
        tr = BoundaryTraces(MonomialTrace(2, 0, 1), zero_trace(2))
        assert theta(tr, np.zeros((1, 1)))[0] == pytest.approx(1.0)

    def test_component_variant(self):
        tr = BoundaryTraces(ConstantTrace([3.0, 4.0]), zero_trace(2))
        xp = np.zeros((1, 1))
        assert theta_component(tr, xp, 0)[0] == pytest.approx(3.0)
        assert theta_component(tr, xp, 1)[0] == pytest.approx(4.0)

    def test_thetabar_smaller_for_m4(self):
        tr = BoundaryTraces(ConstantTrace([1.0, 0.0]), zero_trace(2))
        r = region(m=4, eps=1e-3)
        xp = np.linspace(-0.9, 0.9, 33)[:, None]
        assert np.all(theta_bar_delta(tr, r, xp) <= theta(tr, xp))


# ---------------------------------------------------------------------------
# the ansatz field
# ---------------------------------------------------------------------------

class TestAnsatzField:
    def test_laplace_reduces_to_interpolant(self):
        r = region()
        tr = BoundaryTraces(ConstantTrace([2.0]), ConstantTrace([-1.0]))
        af = build_ansatz(make_laplace(2, 1), r, tr)
        xp = np.linspace(-0.9, 0.9, 9)[:, None]
        t = np.linspace(0.1, 0.9, 9)
        x = r.from_box(xp, t)
        assert np.allclose(af.value(x)[:, 0], 2.0 * t - 1.0 * (1 - t), atol=1e-14)

    def test_boundary_match_exact(self):
        r = region(m=3, upper=0.9, lower=0.7, eps=0.02)
        tr = BoundaryTraces(PolyTrace([[0.3, 1.0, -0.5], [1.0, 2.0]]),
                            PolyTrace([[0.1], [0.0, -1.0]]))
        af = build_ansatz(LAME, r, tr)
        xp = np.linspace(-0.99, 0.99, 500)[:, None]
        top = r.from_box(xp, np.ones(500))
        bot = r.from_box(xp, np.zeros(500))
        assert np.abs(af.value(top) - tr.phi.value(xp)).max() <= 1e-14
        assert np.abs(af.value(bot) - tr.psi.value(xp)).max() <= 1e-14

    def test_modes_agree_pointwise(self):
        params = LameParameters(0.7, 1.3)
        tensor = make_lame(params, 2)
        r = region(m=2, upper=1.1, lower=0.4, eps=5e-3)
        tr = BoundaryTraces(PolyTrace([[1.0, 0.5], [0.2, -0.3]]),
                            PolyTrace([[0.0], [0.4]]))
        gen = build_ansatz(tensor, r, tr, "generic")
        cls = build_ansatz(tensor, r, tr, "lame_closed_form", lame=params)
        rng = np.random.default_rng(0)
        x = r.from_box(rng.uniform(-0.9, 0.9, (10000, 1)), rng.uniform(0, 1, 10000))
        dv = np.abs(gen.value(x) - cls.value(x)).max()
        dg = np.abs(gen.gradient(x) - cls.gradient(x)).max()
        assert dv <= 1e-12 and dg <= 1e-12

    def test_mode_tensor_mismatch_rejected(self):
        with pytest.raises(ConstructionError):
            build_ansatz(make_laplace(2, 2), region(), E1_GAP,
                         "lame_closed_form", lame=LameParameters(1.0, 1.0))

    def test_component_decomposition_sums_to_field(self):
        r = region(eps=0.02)
        tr = BoundaryTraces(PolyTrace([[1.0, 0.3], [0.5]]),
                            PolyTrace([[0.2], [0.1, -0.4]]))
        af = build_ansatz(LAME, r, tr)
        rng = np.random.default_rng(1)
        x = r.from_box(rng.uniform(-0.9, 0.9, (50, 1)), rng.uniform(0, 1, 50))
        total = sum(af.component(l, x) for l in range(2))
        assert np.abs(total - af.value(x)).max() <= 1e-14

    @given(st.floats(-5, 5), st.floats(-5, 5))
    @settings(max_examples=20, deadline=None)
    def test_linearity_in_the_data(self, a, b):
        r = region(eps=0.05)
        tr1 = BoundaryTraces(ConstantTrace([1.0, 0.0]), ConstantTrace([0.0, 0.5]))
        tr2 = BoundaryTraces(PolyTrace([[0.0, 1.0], [0.3]]), zero_trace(2))
        mixed = BoundaryTraces(
            PolyTrace([[a, b], [0.3 * b]]),
            ConstantTrace([0.0, 0.5 * a]))
        f1 = build_ansatz(LAME, r, tr1)
        f2 = build_ansatz(LAME, r, tr2)
        fm = build_ansatz(LAME, r, mixed)
        x = r.from_box(np.array([[0.2], [-0.4]]), np.array([0.3, 0.8]))
        want = a * f1.value(x) + b * f2.value(x)
        scale = max(1.0, np.abs(want).max())
        assert np.abs(fm.value(x) - want).max() <= 1e-12 * scale


class TestGradAnsatz:
    def test_vertical_derivative_of_interpolant(self):
        # Laplacian, constant data gap a: d_n ubar = a / delta exactly
        r = region(eps=0.01)
        tr = BoundaryTraces(ConstantTrace([3.0]), zero_trace(1))
        af = build_ansatz(make_laplace(2, 1), r, tr)
        xp = np.array([[0.1]])
        x = r.from_box(xp, np.array([0.25]))
        assert af.gradient(x)[0, 0, 1] == pytest.approx(3.0 / 0.02, rel=1e-14)

    def test_matches_central_differences(self):
        r = region(m=2, upper=1.0, lower=0.5, eps=5e-3)
        tr = BoundaryTraces(PolyTrace([[1.0, 0.2, -0.1], [0.5, 0.4]]),
                            PolyTrace([[0.0, -0.3], [0.1]]))
        af = build_ansatz(LAME, r, tr)
        rng = np.random.default_rng(2)
        xp = rng.uniform(-0.9, 0.9, (1000, 1))
        t = rng.uniform(0.05, 0.95, 1000)
        x = r.from_box(xp, t)
        g = af.gradient(x)
        h = (1e-6 * r.delta(xp))[:, None]
        scale = np.abs(g).max()
        for a in range(2):
            dx = np.zeros((1000, 2))
            dx[:, a] = h[:, 0]
            fd = (af.value(x + dx) - af.value(x - dx)) / (2 * h)
            assert np.abs(g[..., a] - fd).max() <= 1e-6 * scale

    def test_correction_singular_part_vanishes_at_origin(self):
        # radial profiles: d_l delta(0) = 0 kills the correction value there,
        # so its contribution to the singular vertical derivative drops out;
        # what survives is the bounded r(v) dS term driven by the curvature
        r = region(m=2, upper=1.0, lower=1.0, eps=0.01)
        af = build_ansatz(LAME, r, E1_GAP)
        af0 = build_ansatz(LAME, r, E1_GAP, include_correction=False)
        x = r.from_box(np.zeros((1, 1)), np.array([0.37]))
        S, dS, _ = af.correction_sum(np.zeros((1, 1)))
        assert np.abs(S).max() <= 1e-15
        diff = af.gradient(x) - af0.gradient(x)
        assert np.abs(diff[0, :, 1]).max() <= 1e-14       # vertical slot clean
        assert np.abs(diff).max() <= 4.0                  # leftover is bounded

    def test_degenerate_equal_traces_stay_bounded(self):
        # phi == psi independent of x_n: ubar = phi and grad is eps-uniform
        tr = BoundaryTraces(PolyTrace([[1.0, 0.0, 1.0], [0.0]]),
                            PolyTrace([[1.0, 0.0, 1.0], [0.0]]))
        sups = []
        for eps in (1e-2, 1e-4, 1e-6):
            r = region(eps=eps)
            af = build_ansatz(LAME, r, tr)
            xp = np.linspace(-0.9, 0.9, 101)[:, None]
            x = r.from_box(xp, np.full(101, 0.3))
            assert np.abs(af.value(x) - tr.phi.value(xp)).max() <= 1e-14
            sups.append(np.abs(af.gradient(x)).max())
        assert max(sups) <= min(sups) * (1 + 1e-12)


class TestResidual:
    def test_exact_solution_case(self):
        # flat strip + Laplacian + data linear in x_n: the interpolant is
        # harmonic, so the residual vanishes identically
        flat = ProfilePair(FLAT, FLAT, 2, 1, 1, 1, 1, 0.5)
        r = NarrowRegion(flat, 1.0, 2)
        tr = BoundaryTraces(ConstantTrace([2.0]), ConstantTrace([-1.0]))
        af = build_ansatz(make_laplace(2, 1), r, tr)
        rng = np.random.default_rng(3)
        x = r.from_box(rng.uniform(-0.9, 0.9, (200, 1)), rng.uniform(0.05, 0.95, 200))
        assert np.abs(af.residual(x)).max() <= 1e-10

    def test_residual_matches_operator_of_fd_hessian(self):
        # independent check: contract the tensor with FD second derivatives
        r = region(m=2, upper=0.8, lower=0.2, eps=0.05)
        tr = BoundaryTraces(PolyTrace([[0.5, 1.0], [0.0, 0.2]]), zero_trace(2))
        af = build_ansatz(LAME, r, tr)
        x0 = r.from_box(np.array([[0.21]]), np.array([0.6]))[0]
        h = 2e-6
        hess = np.zeros((2, 2, 2))
        for a in range(2):
            for b in range(2):
                ea, eb = np.zeros(2), np.zeros(2)
                ea[a] = h
                eb[b] = h
                hess[:, a, b] = (af.value((x0 + ea + eb)[None])[0]
                                 - af.value((x0 + ea - eb)[None])[0]
                                 - af.value((x0 - ea + eb)[None])[0]
                                 + af.value((x0 - ea - eb)[None])[0]) / (4 * h * h)
        A = LAME.A(x0[None])[0]
        want = np.einsum("ijab,jab->i", A, hess)
        got = af.residual(x0[None])[0]
        assert np.abs(got - want).max() <= 1e-3 * max(1.0, np.abs(want).max())

    def test_scaled_residual_bounded_with_correction(self):
        # |f| delta / Theta stays O(1) while the uncorrected |f0| delta^2 / Theta
        # keeps a positive floor: the delta^{-2} part is what the correction kills
        tr = E1_GAP
        corr, unc = [], []
        for eps in (1e-2, 1e-3, 1e-4):
            r = region(eps=eps)
            af = build_ansatz(LAME, r, tr)
            af0 = build_ansatz(LAME, r, tr, include_correction=False)
            xp = np.linspace(-0.45, 0.45, 151)[:, None]
            x = r.from_box(xp, np.full(151, 0.35))
            dlt = r.delta(xp)
            th = theta(tr, xp)
            corr.append((np.linalg.norm(af.residual(x), axis=-1) * dlt / th).max())
            unc.append((np.linalg.norm(af0.residual(x), axis=-1) * dlt ** 2 / th).max())
        assert max(corr) <= 12.0                  # bounded, eps-uniform
        assert min(unc) >= 1.0                    # bounded below away from zero
