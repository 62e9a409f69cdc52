import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eigenbound import bounds as B
from eigenbound.divergences import FisherForm, PcaModel, fisher_pca
from eigenbound.linalg import Spectrum, make_rng
from eigenbound.prior import prior_oracle_small_p
from eigenbound.risk import prior_draws


def spec(*v):
    return Spectrum.explicit(v)


class TestPairTerm:
    def test_examples(self):
        assert B.pair_term(2, 1, 10) == pytest.approx(0.2)
        assert B.pair_term(3, 1, 1) == pytest.approx(0.75)
        assert B.pair_term(2, 2, 5) == math.inf

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            B.pair_term(0, 1, 1)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(1e-3, 1e3), st.floats(1, 1e4))
    def test_scale_invariance(self, a, b, t, n):
        if a == b:
            return
        assert B.pair_term(t * a, t * b, n) == pytest.approx(B.pair_term(a, b, n), rel=1e-9)


class TestMainBound:
    def test_spiked_example(self):
        r = B.theorem_main_bound(spec(2, 2, 1, 1), [1, 2], 100)
        assert r.value == pytest.approx(0.08)
        assert r.witness == {"J": [1, 2, 3, 4]}
        assert len(r.per_pair_terms) == 4
        assert B.theorem_main_bound(spec(2, 2, 1, 1), [1, 2], 100, "exhaustive").value == pytest.approx(0.08)

    def test_full_index_set_is_zero(self):
        assert B.theorem_main_bound(spec(3, 2, 1), [1, 2, 3], 10).value == 0

    def test_large_n_uses_full_set(self):
        s = spec(3, 2, 1)
        n = 1e6
        r = B.theorem_main_bound(s, [1], n)
        assert r.witness["J"] == [1, 2, 3]
        assert r.value == pytest.approx(B.pair_term(3, 2, n) + B.pair_term(3, 1, n), rel=1e-12)

    def test_equal_eigenvalue_pair_takes_cap(self):
        r = B.theorem_main_bound(spec(2, 2, 1), [1], 1e9, "full")
        assert r.per_pair_terms[(1, 2)] == pytest.approx(1 / 3)

    def test_exhaustive_dominates_and_matches_on_contiguous_sets(self):
        for k in range(30):
            rng = make_rng(1, k)
            p = int(rng.integers(2, 9))
            s = Spectrum.explicit(np.sort(rng.uniform(0.1, 5, p))[::-1])
            I = range(1, int(rng.integers(1, p)) + 1)
            n = float(10 ** rng.uniform(0, 3))
            h = B.theorem_main_bound(s, I, n).value
            e = B.theorem_main_bound(s, I, n, "exhaustive").value
            assert e >= h
            assert e == h

    def test_exhaustive_limit(self):
        with pytest.raises(ValueError):
            B.theorem_main_bound(Spectrum.poly(1.0, 13), [1], 10, "exhaustive")
        with pytest.raises(ValueError):
            B.theorem_main_bound(spec(2, 1), [1], 10, "nope")

    def test_scale_invariance_and_monotone_in_n(self):
        s = Spectrum.poly(1.0, 10)
        a = B.theorem_main_bound(s, [1, 2, 3], 200)
        b = B.theorem_main_bound(Spectrum.explicit(7.5 * s.values), [1, 2, 3], 200)
        assert a.value == pytest.approx(b.value, rel=1e-12)
        prev = None
        for n in (10, 100, 1000, 10000):
            r = B.theorem_main_bound(s, [1, 2, 3], n, "full")
            if prev is not None:
                assert r.value <= prev.value
                assert all(r.per_pair_terms[k] <= prev.per_pair_terms[k] for k in r.per_pair_terms)
            prev = r

    def test_report_json(self):
        r = B.theorem_main_bound(spec(2, 2, 1), [1], 1e9, "full")
        d = json.loads(r.to_json())
        assert set(d) >= {"value", "witness", "per_pair_terms", "constant_mode", "truncation"}
        assert d["constant_mode"] == "structural"
        assert d["constant_range"] == [0.0, 2.0]
        with pytest.raises(ValueError):
            B.BoundReport(-1.0)


class TestBayesBound:
    def test_example(self):
        assert B.bayes_bound(spec(2, 1), [1], 10, 1.0).value == pytest.approx(0.2)

    def test_large_h_vanishes(self):
        assert B.bayes_bound(spec(2, 1), [1], 10, 1e4).value < 1e-8

    def test_matches_full_j_at_unit_h(self):
        s = spec(4, 3, 2, 1)
        for n in (1, 10, 1000):
            assert B.bayes_bound(s, [1, 2], n, 1.0).value == pytest.approx(
                B.theorem_main_bound(s, [1, 2], n, "full").value
            )

    def test_flags_small_h(self):
        r = B.bayes_bound(spec(2, 1), [1], 10, 0.5, h_min=1.0)
        assert "flag" in r.extras


class TestCorollaries:
    def test_spiked_examples(self):
        assert B.spiked_bound(4, 2, 2.0, 1.0, 100).value == pytest.approx(0.08)
        assert B.spiked_bound(6, 2, 2.0, 1.0, 1e-6).value == 2
        assert B.spiked_bound(6, 5, 2.0, 1.0, 1e-6).value == 1
        with pytest.raises(ValueError):
            B.spiked_bound(4, 2, 1.0, 1.0, 10)

    def test_spiked_dominates_full_j(self):
        for p, d in ((4, 1), (6, 2), (10, 5)):
            for n in (1, 10, 100, 1e4):
                sp = B.spiked_bound(p, d, 3.0, 1.0, n).value
                full = B.theorem_main_bound(Spectrum.spiked(p, d, 3.0, 1.0), range(1, d + 1), n, "full").value
                assert full <= sp + 1e-12
                # min(d, p - d) <= 2 d (p - d) / p, so the corollary is within a factor 2
                assert sp <= 2 * full + 1e-12

    def test_spiked_general(self):
        assert B.spiked_general_bound(spec(4, 1, 1, 1), 1, 8).value == pytest.approx(2 / 9)
        assert B.spiked_general_bound(spec(5, 4, 1, 1, 1, 1), 2, 1e-9).value == 2
        with pytest.raises(ValueError):
            B.spiked_general_bound(spec(1, 1, 1, 1), 1, 8)

    def test_decay_examples(self):
        assert B.decay_bounds(1.0, 10, 1000, "poly", single=True).value == pytest.approx(0.1)
        assert B.decay_bounds(0.7, 3, 100, "exp").value == pytest.approx(0.01)
        assert B.decay_bounds(1.0, 10, 5, "poly").value == 10  # (d^2/n)(1 + 0) = 20 > d
        r = B.decay_bounds(1.0, 8, 1000, "poly")
        assert r.truncation == 64
        assert r.witness["J"] == list(range(5, 13))
        assert B.decay_bounds(1.0, 10, 1000, "poly", single=True).witness["J"] == [10, 11]

    def test_decay_witness_sum_tracks_rate(self):
        # the witness-window sum is within a constant of the structural rate
        ratios = []
        for d in (4, 8, 16):
            for n in (10, 100, 1000, 10**4, 10**5):
                r = B.decay_bounds(1.0, d, n, "poly")
                ratios.append(r.extras["witness_sum"] / r.value)
        assert min(ratios) > 1 / 64
        assert max(ratios) < 4

    def test_decay_matches_lemma_a1_composition(self):
        ratios = []
        for d in (4, 8, 16, 32):
            m = d // 2
            for n in (10, 100, 1000, 10**4, 10**5):
                lhs, _ = B.lemma_a1(m, m * m / n)
                ratios.append(lhs / B.decay_bounds(1.0, d, n, "poly").value)
        assert min(ratios) > 1 / 32
        assert max(ratios) < 4


class TestLemmaA1:
    def test_examples(self):
        lhs, rhs = B.lemma_a1(4, 1.0)
        assert lhs == pytest.approx(4 / 3)
        assert B.lemma_a1(7, 0.0) == (0.0, 0.0)
        for m in (1, 5, 20):
            assert B.lemma_a1(m, m + 3.0)[0] == pytest.approx((m + 1) / 2)

    def test_grid_minimum_frozen(self):
        ratio, m, x = B.lemma_a1_grid_min()
        assert ratio == pytest.approx(0.5025, abs=1e-12)
        assert ratio >= 1 / 8

    def test_validation(self):
        with pytest.raises(ValueError):
            B.lemma_a1(0, 1.0)


class TestChapmanRobbins:
    def test_examples(self):
        assert B.chapman_robbins_eval(0, 1, 1) == 0
        assert B.chapman_robbins_eval(1, 1, 1) == pytest.approx(1 / 3)
        assert B.chi2_two_point_prior(0.75) == pytest.approx(4 / 3)
        assert B.chapman_robbins_eval(1, 0, 0) == math.inf

    def test_multi_shift(self):
        assert B.chapman_robbins_eval([1, 1], [1, 1], [0, 0]) == pytest.approx(4 / 2)

    @settings(max_examples=50, deadline=None)
    @given(st.one_of(st.just(0.0), st.floats(1e-6, 5), st.floats(-5, -1e-6)), st.floats(1e-3, 10), st.floats(0, 10))
    def test_zero_iff_gain_zero(self, g, cm, cp):
        val = B.chapman_robbins_eval(g, cm, cp)
        assert (val == 0) == (g == 0)


class TestDensityToy:
    def test_rate(self):
        ns = [10**3, 10**4, 10**5, 10**6]
        vals = [B.density_toy_bound(B.DensityToyConfig(n=n)).value for n in ns]
        slope = np.polyfit(np.log(ns), np.log(vals), 1)[0]
        assert slope == pytest.approx(-2 / 3, abs=0.05)
        assert all(v > 0 for v in vals)

    def test_uniform_prior_is_trivial(self):
        assert B.density_toy_bound(B.DensityToyConfig(n=1000, q=0.5)).value == 0

    def test_validation_and_flag(self):
        with pytest.raises(ValueError):
            B.DensityToyConfig(h=1.5)
        r = B.density_toy_bound(B.DensityToyConfig(n=100, c0=0.3))
        assert "flag" in r.extras
        assert "flag" not in B.density_toy_bound(B.DensityToyConfig(n=100)).extras

    def test_kernel_constants(self):
        from scipy import integrate

        assert B.triangular_kernel(0.0) == 2
        assert integrate.quad(lambda u: B.triangular_kernel(u) ** 2, -0.5, 0.5)[0] == pytest.approx(4 / 3)
        assert integrate.quad(B.triangular_kernel, -0.5, 0.5)[0] == pytest.approx(1.0)

    def test_model_chi2_bound_holds(self):
        for n in (10, 1000, 10**5):
            cfg = B.DensityToyConfig(n=n)
            single = B.density_toy_chi2_exact(cfg)
            assert (1 + single) ** n - 1 <= B.density_toy_bound(cfg).extras["chi2_model_bound"]


class TestLinearFunctional:
    def test_examples(self):
        s = spec(2, 1)
        assert B.linear_functional_bound(s, 1, [1, 0], 4, 2) == 0
        assert B.linear_functional_bound(s, 1, [0, 1], 4, 2) == pytest.approx(0.5 / 6)

    def test_asymptotic_form(self):
        s = spec(3, 2, 1)
        alpha = [0.0, 0.6, 0.8]
        c = 1.3
        lim = B.linear_functional_limit(s, 1, alpha, c)
        n = 1e10
        val = n * B.linear_functional_bound(s, 1, alpha, n, B.linear_functional_k(n, c))
        assert val == pytest.approx(lim, rel=1e-4)

    def test_requires_separation(self):
        with pytest.raises(ValueError):
            B.linear_functional_bound(spec(2, 2, 1), 1, [0, 0, 1], 4, 2)
        with pytest.raises(ValueError):
            B.linear_functional_bound(spec(2, 1), 1, [0, 1], 4, 0.5)


class TestVanTrees:
    def test_constant_parameter_gives_zero(self):
        U = prior_draws(3, 1.0, 40, seed=0)
        val, _ = B.van_trees_matrix_bound(U, lambda U, L: np.zeros((U.shape[0], 1)), np.eye(3), B.exp_trace_score(1.0))
        assert val == 0

    def test_reproduces_eigenspace_corollary(self):
        p, h, n = 3, 1.0, 20
        s = spec(3, 2, 1)
        I = (1,)
        U = prior_draws(p, h, 400, seed=1)
        m_hat = np.mean(
            [
                (U[:, j, j] * U[:, k, k] + U[:, j, k] * U[:, k, j]).mean()
                for j in range(p)
                for k in range(j + 1, p)
            ]
        )
        form = fisher_pca(PcaModel(s, n))
        y = 8 * h * h * p
        shifted = FisherForm("pca+prior", form.weights + y * (1 - np.eye(p)))
        dirs = B.corollary_directions(I, p, form, y)
        direct = B.van_trees_directional(U, B.projector_derivative(I), shifted, dirs)
        cor = B.eigenspace_van_trees(s, I, n, h, m_hat).value
        assert direct == pytest.approx(cor, rel=0.1)

    def test_matrix_form_dominates_directional(self):
        p, h, n = 3, 0.7, 10
        s = spec(3, 2, 1)
        I = (1,)
        U = prior_draws(p, h, 200, seed=2)
        form = fisher_pca(PcaModel(s, n))
        score = B.exp_trace_score(h)
        mat, info = B.van_trees_matrix_bound(U, B.projector_derivative(I), form.gram(), score)
        dirs = B.corollary_directions(I, p, form, 8 * h * h * p)

        def score_dir(U, xi):
            return h * p * np.trace(U @ xi, axis1=1, axis2=2)

        direc = B.van_trees_directional(U, B.projector_derivative(I), form, dirs, score_dir)
        assert mat >= direc * (1 - 1e-9)
        assert mat > 0

    def test_score_identity(self):
        U = prior_draws(4, 1.0, 20, seed=3)
        sc = B.exp_trace_score(1.0)(U)
        from eigenbound.linalg import basis_generator

        L = basis_generator(2, 4, 4)
        col = [k for k, (i, j) in enumerate([(i, j) for i in range(1, 5) for j in range(i + 1, 5)]) if (i, j) == (2, 4)][0]
        assert np.allclose(sc[:, col], 4.0 * np.trace(U @ L, axis1=1, axis2=2))

    def test_concentrated_prior_shrinks_bound(self):
        s = spec(3, 2, 1)
        form = fisher_pca(PcaModel(s, 10))
        vals = []
        for h in (50.0, 500.0):
            U = prior_draws(3, h, 100, seed=4)
            vals.append(B.van_trees_matrix_bound(U, B.projector_derivative((1,)), form.gram(), B.exp_trace_score(h))[0])
        assert vals[1] < 0.2 * vals[0]

    def test_regularisation_flag(self):
        U = prior_draws(3, 1.0, 20, seed=5)
        val, info = B.van_trees_matrix_bound(U, B.projector_derivative((1,)), np.zeros((3, 3)), None)
        assert info["regularized"]
        assert val > 0


class TestEigenspaceVanTrees:
    def test_deterministic_p2(self):
        m = prior_oracle_small_p(2, 1.0, "pair_moment")
        r = B.eigenspace_van_trees(spec(2, 1), [1], 10, 1.0, m)
        assert r.value == pytest.approx(2 * m * m / (5 + 16))
        assert r.extras["prefactor"] <= 2
        assert r.extras["min_form"] <= r.value + 1e-15

    def test_haar_limit(self):
        assert B.eigenspace_van_trees(spec(3, 2, 1), [1], 10, 0.0, 0.0).value == 0


class TestDenoiseBound:
    def test_example(self):
        assert B.denoise_bound(spec(1, 0), [1], 1.0, 1.0).value == pytest.approx(1 / 64)

    def test_small_sigma(self):
        assert B.denoise_bound(spec(1, 0), [1], 1e-8, 1.0).value < 1e-15

    def test_equal_eigenvalues_capped(self):
        r = B.denoise_bound(spec(1, 1, 0), [1], 1.0, 1.0)
        assert r.per_pair_terms[(1, 2)] == pytest.approx(2 * 0.25 * 0.5 / (8 * 3))

    def test_requires_positive_sigma(self):
        with pytest.raises(ValueError):
            B.denoise_bound(spec(1, 0), [1], 0.0, 1.0)
