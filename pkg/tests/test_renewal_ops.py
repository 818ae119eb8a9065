import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intermittency_lab import (
    DomainError,
    Interval,
    StepFunction,
    compositions,
    kac_check,
    projector_P,
    renewal_identity_check,
    uniform_y_mesh,
    var_norm,
)
from intermittency_lab import kernels, renewal_ops


class TestStepFunction:
    def test_integral_and_sampling(self):
        bp = uniform_y_mesh(4)
        f = StepFunction(bp, np.array([1.0, 2.0, 3.0, 4.0]))
        assert f.integral() == pytest.approx(0.125 * 10, abs=1e-15)
        # pieces are half-open (lo, hi]
        assert f.sample(np.array([0.625]))[0] == 1.0
        assert f.sample(np.array([0.626]))[0] == 2.0
        assert f.sample(np.array([0.5]))[0] == 0.0  # outside Y
        assert f.sample(np.array([1.0]))[0] == 4.0

    def test_indicator_with_fractions(self):
        bp = uniform_y_mesh(4)
        ind = StepFunction.indicator(Interval(0.5625, 0.875), bp)
        assert ind.values == pytest.approx([0.5, 1.0, 1.0, 0.0], abs=1e-15)
        assert ind.integral() == pytest.approx(0.875 - 0.5625, abs=1e-15)

    def test_restrict_integral(self):
        bp = uniform_y_mesh(2)
        f = StepFunction(bp, np.array([2.0, 4.0]))
        assert f.restrict_integral(0.5, 0.75) == pytest.approx(0.5, abs=1e-15)
        assert f.restrict_integral(0.6, 0.8) == pytest.approx(
            2.0 * 0.15 + 4.0 * 0.05, abs=1e-15
        )

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            StepFunction(uniform_y_mesh(4), np.zeros(3))


class TestVarNorm:
    def test_examples(self):
        bp = uniform_y_mesh(3)
        assert var_norm(StepFunction.constant(1.0, bp)) == 2.0
        assert var_norm(StepFunction.constant(0.0, bp)) == 0.0
        assert var_norm(StepFunction(bp, np.array([1.0, -1.0, 1.0]))) == 6.0

    @settings(max_examples=100)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=8))
    def test_sup_bounded_by_half_variation(self, vals):
        f = StepFunction(uniform_y_mesh(len(vals)), np.asarray(vals))
        assert np.abs(f.values).max() <= 0.5 * var_norm(f) + 1e-12

    @settings(max_examples=100)
    @given(
        st.lists(st.floats(-5, 5), min_size=4, max_size=4),
        st.lists(st.floats(-5, 5), min_size=4, max_size=4),
    )
    def test_subadditive(self, a, b):
        bp = uniform_y_mesh(4)
        fa = StepFunction(bp, np.asarray(a))
        fb = StepFunction(bp, np.asarray(b))
        fs = StepFunction(bp, fa.values + fb.values)
        assert var_norm(fs) <= var_norm(fa) + var_norm(fb) + 1e-10


class TestProjector:
    def test_idempotent_rank_one(self, engine05):
        h_y, mu_y = engine05.h_y, engine05.mu_y
        f = StepFunction(h_y.breakpoints, np.cos(10 * h_y.midpoints))
        pf = projector_P(f, h_y, mu_y)
        ppf = projector_P(pf, h_y, mu_y)
        assert np.abs(ppf.values - pf.values).max() < 1e-12
        # range is the line spanned by h_y
        ratio = pf.values / h_y.values
        assert np.ptp(ratio) < 1e-12
        zero = projector_P(StepFunction.constant(0.0, h_y.breakpoints), h_y, mu_y)
        assert np.all(zero.values == 0.0)


class TestReturnOperators:
    def test_first_operator_is_affine_halving(self, ops05):
        one = StepFunction.constant(1.0, ops05.breakpoints)
        g = ops05.apply_Rn(1, one)
        assert g.values == pytest.approx(np.full(ops05.mesh_size, 0.5), abs=1e-14)
        assert g.integral() == pytest.approx(0.25, abs=1e-15)

    def test_mass_conservation_per_branch(self, ops05, frs05):
        rng = np.random.default_rng(8)
        f = StepFunction(ops05.breakpoints, rng.random(ops05.mesh_size))
        for n in (1, 2, 5, 17, 60):
            g = ops05.apply_Rn(n, f)
            i_n = frs05.interval(n)
            assert g.integral() == pytest.approx(
                f.restrict_integral(i_n.lo, i_n.hi), abs=1e-15
            )

    def test_norm_decay_rate(self, ops05, frs05, p05):
        # sup norm of R_n decays like the branch length, 1/n**(beta+1)
        ns = np.arange(20, frs05.n_max + 1)
        scaled = np.array(
            [n ** (p05.beta + 1) * ops05.operator_norm(n) for n in ns]
        )
        assert scaled.max() / scaled.min() < 4.0

    def test_variation_bound(self, ops05, p05):
        one = StepFunction.constant(1.0, ops05.breakpoints)
        scaled = [
            n ** (p05.beta + 1) * var_norm(ops05.apply_Rn(n, one))
            for n in (10, 30, 100, 300, 1000)
        ]
        assert max(scaled) / min(scaled) < 4.0

    def test_summed_operator_preserves_integral(self, ops05):
        rng = np.random.default_rng(12)
        f = StepFunction(ops05.breakpoints, rng.standard_normal(ops05.mesh_size))
        g = ops05.apply_R1(f)
        assert g.integral() == pytest.approx(f.integral(), abs=1e-13)

    def test_leading_eigenpair(self, ops05):
        lam, eig = ops05.leading
        assert lam == pytest.approx(1.0, abs=1e-12)
        assert np.all(eig.values > 0.0)
        back = ops05.apply_R1(eig)
        assert np.abs(back.values - lam * eig.values).max() < 1e-10

    def test_eigenfunction_matches_density_on_Y(self, ops05, engine05):
        _, eig = ops05.leading
        # compare after normalizing both to unit integral over Y
        e = eig.values / eig.integral()
        h = engine05.h_y
        h_on = h.sample(ops05._mids) / engine05.mu_y
        l1 = float(np.abs(e - h_on) @ ops05._widths)
        assert l1 < 0.03  # coarse meshes; the acceptance suite checks 1%

    def test_bad_branch_index(self, ops05):
        one = StepFunction.constant(1.0, ops05.breakpoints)
        with pytest.raises(DomainError):
            ops05.apply_Rn(0, one)


class TestKac:
    def test_partial_sums(self, frs05, density05):
        diag = kac_check(frs05, density05, 2048)
        s = diag.kac_partial_sums
        assert np.all(np.diff(s) > 0)
        assert 0.95 <= s[-1] <= 1.01
        assert diag.gamma_hat * diag.mu_y == pytest.approx(1.0, abs=1e-14)

    def test_too_many_terms(self, frs05, density05):
        with pytest.raises(DomainError):
            kac_check(frs05, density05, frs05.n_max + 1)


class TestCorrelationEngine:
    def test_single_step_integral(self, engine05):
        one = StepFunction.constant(1.0, engine05.y_breakpoints)
        g = engine05.apply_Tn(1, one)
        # Leb(Y ∩ T^{-1} Y) = Leb((3/4, 1]) = 1/4
        assert g.integral() == pytest.approx(0.25, abs=1e-3)

    def test_correlation_against_monte_carlo(self, engine05, p05):
        a, b, lag = Interval(0.6, 0.8), Interval(0.7, 0.9), 3
        op_val = engine05.correlation(a, b, lag)
        n_steps = 2 * 10**7
        n_a, n_ab = kernels.pair_frequency(
            0.6180339887, p05.alpha, 10**4, n_steps, a.lo, a.hi, b.lo, b.hi, lag
        )
        mc_val = n_ab / n_steps
        assert op_val == pytest.approx(mc_val, abs=2e-3)
        # marginal sanity: time average of 1_A matches mu(A)
        assert n_a / n_steps == pytest.approx(
            engine05.density.measure(a.lo, a.hi), abs=2e-3
        )

    def test_profile_consistency(self, engine05):
        a, b = Interval(0.55, 0.7), Interval(0.8, 0.95)
        prof = engine05.correlation_profile(a, b, 8)
        assert prof[4] == engine05.correlation(a, b, 5)
        # A needs a couple of steps to reach B, so the first entries vanish
        assert np.all(prof >= 0)
        assert np.all(prof[2:] > 0)

    def test_domain_check(self, engine05):
        with pytest.raises(DomainError):
            engine05.correlation(Interval(0.2, 0.4), Interval(0.6, 0.8), 2)

    def test_cn_converges_to_one_from_above(self, engine05):
        c_hat = engine05.estimate_cn(512)
        assert abs(c_hat[-1] - 1.0) < 0.01
        # the correction term has constant sign once transients die out
        tail = c_hat[15:] - 1.0
        assert np.all(tail > 0.0)

    def test_decay_exponent(self, engine05, p05):
        c_hat = engine05.estimate_cn(512)
        slope, half, ns = engine05.fit_decay_exponent(c_hat)
        assert slope is not None
        assert 0.7 <= -slope <= 1.3  # target: beta - 1 = 1
        assert half < 0.15
        assert ns[0] >= 16 and ns[-1] <= 512

    def test_fit_skipped_at_numeric_floor(self, engine05):
        slope, half, ns = engine05.fit_decay_exponent(np.ones(512))
        assert slope is None and half is None

    def test_residual_bound_stats(self, engine05):
        pairs = [
            (Interval(0.55, 0.65), Interval(0.7, 0.9)),
            (Interval(0.6, 0.95), Interval(0.52, 0.6)),
        ]
        ns = np.array([16, 32, 64])
        c_hat = engine05.estimate_cn(64)
        stats = engine05.residual_bound_stats(pairs, ns, c_hat)
        assert stats.shape == (2, 3)
        assert np.all(np.isfinite(stats)) and np.all(stats >= 0)


class TestRenewalIdentity:
    def test_compositions(self):
        assert list(compositions(0)) == [()]
        words = list(compositions(6))
        assert len(words) == 2**5
        assert all(sum(w) == 6 for w in words)
        assert len(set(words)) == len(words)

    def test_identity_exact(self, frs05):
        for n in range(1, 9):
            assert renewal_identity_check(n, frs05) < 1e-10

    def test_range_guard(self, frs05):
        with pytest.raises(DomainError):
            renewal_identity_check(0, frs05)
        with pytest.raises(DomainError):
            renewal_identity_check(13, frs05)


class TestOutputs:
    def test_json_and_csv(self, frs05, density05, engine05, tmp_path):
        diag = kac_check(frs05, density05, 64)
        c_hat = engine05.estimate_cn(32)
        diag.c_n_estimates = c_hat
        diag.c_ns = np.arange(1, 33, dtype=np.int64)
        diag.decay_exponent = -1.0
        diag.decay_exponent_halfwidth = 0.05
        diag.fit_window = (16, 32)

        jpath = tmp_path / "summary.json"
        diag.to_json(jpath)
        payload = json.loads(jpath.read_text())
        assert payload["gamma_hat"] == diag.gamma_hat
        assert payload["fit_window"] == [16, 32]

        cpath = tmp_path / "renewal.csv"
        renewal_ops.diagnostics_csv(cpath, frs05, density05, diag)
        with open(cpath) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == [
            "n", "leb_In", "mu_In", "kac_partial", "c_n_hat", "residual_bound_stat"
        ]
        assert len(rows) == 65
        assert float(rows[1][1]) == pytest.approx(0.25, abs=1e-15)
