import numpy as np
import pytest

from irl_forge import rp
from irl_forge.errors import (BudgetNotActive, CertificateInvalid, DimensionMismatch, InputError, NonPositiveProbe,
                              NotRationalizable, TooLargeForExact)
from irl_forge.rp import BudgetDataset, NonlinearBudget, RationalityCertificate
from irl_forge.sim import CES, CobbDouglas


def random_dataset(rng, N, m):
    return BudgetDataset(rng.uniform(0.2, 2.0, size=(N, m)), rng.uniform(0.0, 1.0, size=(N, m)) + 1e-3)


class TestBudgetDataset:
    """Validation and normalization."""

    def test_rejects_nonpositive_probe(self):
        with pytest.raises(NonPositiveProbe):
            BudgetDataset([[0.0, 1.0]], [[1.0, 1.0]])

    def test_rejects_negative_response(self):
        with pytest.raises(InputError):
            BudgetDataset([[1.0, 1.0]], [[-1.0, 1.0]])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            BudgetDataset([[1.0, 1.0]], [[1.0, 1.0, 1.0]])

    def test_normalization(self, rng):
        ds = random_dataset(rng, 5, 3)
        np.testing.assert_allclose(ds.income, 1.0)


class TestGarp:
    """GARP by transitive closure."""

    def test_single_observation(self):
        report = rp.check_garp(BudgetDataset([[1.0, 1.0]], [[0.5, 0.5]]))
        assert report.consistent and report.violating_cycle == []

    def test_two_point_cycle(self, violating_ds):
        report = rp.check_garp(violating_ds)
        assert not report.consistent
        assert report.violating_cycle == [1, 2]
        assert report.a_matrix[0, 1] == pytest.approx(-0.5)
        assert report.a_matrix[1, 0] == pytest.approx(-0.5)

    def test_cycle_is_a_violation(self, rng):
        for _ in range(200):
            ds = random_dataset(rng, 5, 2)
            report = rp.check_garp(ds)
            if report.consistent:
                continue
            cyc = [k - 1 for k in report.violating_cycle]
            vals = [report.a_matrix[cyc[t], cyc[(t + 1) % len(cyc)]] for t in range(len(cyc))]
            assert max(vals) <= 0.0 and min(vals) < -1e-7

    def test_cobb_douglas_consistent(self, cobb_douglas_ds):
        assert rp.check_garp(cobb_douglas_ds).consistent

    def test_scale_invariance(self, rng):
        for _ in range(50):
            ds = random_dataset(rng, 5, 2)
            assert rp.check_garp(ds.scaled(3.0)).consistent == rp.check_garp(ds).consistent

    def test_nonlinear_reduction(self, rng):
        for _ in range(50):
            ds = random_dataset(rng, 5, 3)
            nonlinear = rp.check_garp((ds.beta, NonlinearBudget.linear(ds)))
            assert nonlinear.consistent == rp.check_garp(ds).consistent


class TestAfriat:
    """Afriat's inequalities and the reconstructed utility."""

    def test_violating_data_not_rationalizable(self, violating_ds):
        with pytest.raises(NotRationalizable) as info:
            rp.afriat_certificate(violating_ds)
        assert info.value.evidence.violating_cycle == [1, 2]

    def test_cobb_douglas_certificate(self, cobb_douglas_ds):
        cert = rp.afriat_certificate(cobb_douglas_ds)
        assert np.all(cert.lam >= 1.0 - 1e-9)
        assert rp.certificate_slacks(cobb_douglas_ds, cert).min() >= -1e-9

    def test_single_observation(self):
        cert = rp.afriat_certificate(BudgetDataset([[1.0, 2.0]], [[0.2, 0.4]]))
        assert cert.lam[0] >= 1.0

    def test_equivalence_with_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            N, m = int(rng.integers(2, 6)), int(rng.integers(2, 4))
            ds = random_dataset(rng, N, m)
            brute = rp.garp_brute_force(ds.a_matrix())
            assert rp.check_garp(ds).consistent == brute
            try:
                rp.afriat_certificate(ds)
                feasible = True
            except NotRationalizable:
                feasible = False
            assert feasible == brute

    @pytest.mark.slow
    def test_equivalence_full_scale(self):
        rng = np.random.default_rng(1000)
        for _ in range(1000):
            ds = random_dataset(rng, int(rng.integers(2, 7)), int(rng.integers(2, 4)))
            brute = rp.garp_brute_force(ds.a_matrix())
            try:
                rp.afriat_certificate(ds)
                assert brute
            except NotRationalizable:
                assert not brute

    def test_nonlinear_certificate(self, cobb_douglas_ds):
        budget = NonlinearBudget.linear(cobb_douglas_ds)
        cert = rp.afriat_certificate(cobb_douglas_ds, budget)
        assert rp.certificate_slacks(cobb_douglas_ds, cert, budget).min() >= -1e-9

    def test_inactive_nonlinear_budget(self, cobb_douglas_ds):
        budget = NonlinearBudget([lambda b: 1.0] * cobb_douglas_ds.N)
        with pytest.raises(BudgetNotActive):
            budget.check_active(cobb_douglas_ds.beta)


class TestUtility:
    """Piecewise-linear reconstructed utility."""

    def test_interpolates_phi(self, cobb_douglas_ds):
        cert = rp.afriat_certificate(cobb_douglas_ds)
        u = rp.PiecewiseUtility(cert, cobb_douglas_ds)
        for k, b in enumerate(cobb_douglas_ds.beta):
            assert rp.evaluate_utility(u, b) == pytest.approx(cert.phi[k], abs=1e-8)

    def test_monotone(self, cobb_douglas_ds):
        u = rp.PiecewiseUtility(rp.afriat_certificate(cobb_douglas_ds), cobb_douglas_ds)
        b = cobb_douglas_ds.beta[3]
        assert u(b + 0.1) >= u(b)

    def test_maximized_on_budget(self, cobb_douglas_ds):
        ds = cobb_douglas_ds
        cert = rp.afriat_certificate(ds)
        u = rp.PiecewiseUtility(cert, ds)
        for k in range(0, ds.N, 4):
            a = ds.alpha[k]
            t = np.linspace(0.0, 1.0 / a[0], 2001)
            pts = np.column_stack([t, (1.0 - a[0] * t) / a[1]])
            assert u(pts).max() <= cert.phi[k] + 1e-7

    def test_gradient_is_active_piece(self, cobb_douglas_ds):
        u = rp.PiecewiseUtility(rp.afriat_certificate(cobb_douglas_ds), cobb_douglas_ds)
        b = cobb_douglas_ds.beta[0] + 0.05
        k = int(np.argmin(u.pieces(b)[0]))
        np.testing.assert_allclose(u.gradient(b), u.cert.lam[k] * cobb_douglas_ds.alpha[k])

    def test_dimension_checked(self, cobb_douglas_ds):
        u = rp.PiecewiseUtility(rp.afriat_certificate(cobb_douglas_ds), cobb_douglas_ds)
        with pytest.raises(DimensionMismatch):
            rp.evaluate_utility(u, [1.0, 1.0, 1.0])

    def test_contour_plot(self, cobb_douglas_ds):
        plt = pytest.importorskip("matplotlib.pyplot")
        plt.switch_backend("Agg")
        u = rp.PiecewiseUtility(rp.afriat_certificate(cobb_douglas_ds), cobb_douglas_ds)
        ax = rp.plot_utility_contours(u, levels=5)
        assert ax.get_xlabel() == "beta(1)"
        plt.close(ax.figure)


class TestPrediction:
    """Set-valued response prediction."""

    def test_duplicate_observation(self, cobb_douglas_ds):
        assert rp.predict_member(cobb_douglas_ds, cobb_douglas_ds.alpha[-1], cobb_douglas_ds.beta[-1])

    def test_true_demand(self, cobb_douglas_ds, cobb_douglas):
        alpha = np.array([0.8, 1.7])
        assert rp.predict_member(cobb_douglas_ds, alpha, cobb_douglas.demand(alpha))

    def test_reversed_bundle(self, violating_ds):
        ds = violating_ds.subset([0])
        assert not rp.predict_member(ds, violating_ds.alpha[1], violating_ds.beta[1])
        # beta_1 affordable at the new probe, but not the reverse
        assert rp.predict_member(ds, violating_ds.alpha[1], [0.0, 1.0])

    def test_budget_must_bind(self, cobb_douglas_ds):
        with pytest.raises(BudgetNotActive):
            rp.predict_member(cobb_douglas_ds, [1.0, 1.0], [0.2, 0.2])


class TestMargin:
    """Feasibility margin and canonical certificates."""

    def test_binding_certificate(self):
        ds = BudgetDataset([[1.0, 1.0], [1.0, 1.0]], [[0.5, 0.5], [0.5, 0.5]])
        cert = RationalityCertificate([0.0, 0.0], [1.0, 1.0])
        assert rp.feasibility_margin(ds, cert) == 0.0

    def test_canonical_certificate_positive(self, cobb_douglas_ds, cobb_douglas):
        cert = rp.canonical_certificate(cobb_douglas_ds, cobb_douglas, cobb_douglas.gradient)
        assert rp.feasibility_margin(cobb_douglas_ds, cert) > 0.0
        assert rp.feasibility_margin(cobb_douglas_ds, cert, "all") >= rp.feasibility_margin(cobb_douglas_ds, cert)

    def test_finite_difference_fallback(self, cobb_douglas_ds, cobb_douglas):
        exact = rp.canonical_certificate(cobb_douglas_ds, cobb_douglas, cobb_douglas.gradient)
        approx = rp.canonical_certificate(cobb_douglas_ds, cobb_douglas)
        np.testing.assert_allclose(approx.lam, exact.lam, rtol=1e-4)

    def test_invalid_certificate(self, cobb_douglas_ds):
        cert = RationalityCertificate(np.arange(cobb_douglas_ds.N, dtype=float), np.ones(cobb_douglas_ds.N))
        with pytest.raises(CertificateInvalid):
            rp.feasibility_margin(cobb_douglas_ds, cert)

    def test_unknown_variant(self, cobb_douglas_ds, cobb_douglas):
        cert = rp.canonical_certificate(cobb_douglas_ds, cobb_douglas, cobb_douglas.gradient)
        with pytest.raises(InputError):
            rp.feasibility_margin(cobb_douglas_ds, cert, "median")


class TestMasking:
    """Utility masking by response perturbation."""

    @pytest.fixture
    def small_ds(self, cobb_douglas):
        probes = np.random.default_rng(3).uniform(0.5, 2.0, size=(6, 2))
        return BudgetDataset(probes, np.array([cobb_douglas.demand(a) for a in probes]))

    def test_eta_zero_is_identity(self, small_ds, cobb_douglas):
        res = rp.mask_responses(small_ds, cobb_douglas, 0.0, grad=cobb_douglas.gradient)
        np.testing.assert_array_equal(res.beta, small_ds.beta)
        assert res.sacrifice == 0.0

    def test_full_masking(self, small_ds, cobb_douglas):
        res = rp.mask_responses(small_ds, cobb_douglas, 1.0, iters=20, grad=cobb_douglas.gradient)
        assert res.margin <= 1e-7
        assert res.sacrifice > 0.0
        assert np.all(np.einsum("ki,ki->k", small_ds.alpha, res.beta) <= 1.0 + 1e-9)

    def test_partial_masking_between(self, small_ds, cobb_douglas):
        half = rp.mask_responses(small_ds, cobb_douglas, 0.5, iters=20, grad=cobb_douglas.gradient)
        full = rp.mask_responses(small_ds, cobb_douglas, 1.0, iters=20, grad=cobb_douglas.gradient)
        assert half.target == pytest.approx(0.5 * half.original_margin)
        assert half.margin <= half.target + 1e-7
        assert half.margin >= full.margin - 1e-7
        assert half.sacrifice >= 0.0

    def test_eta_range(self, small_ds, cobb_douglas):
        with pytest.raises(InputError):
            rp.mask_responses(small_ds, cobb_douglas, 1.5)


class TestIndices:
    """Goodness-of-fit indices."""

    def test_consistent_data(self, cobb_douglas_ds):
        idx = rp.rationality_indices(cobb_douglas_ds, exact_limit=30)
        assert (idx.hmi, idx.afriat_index, idx.mci) == (1.0, 1.0, 0.0)

    def test_two_point_cycle(self, violating_ds):
        idx = rp.rationality_indices(violating_ds)
        assert idx.hmi == 0.5
        assert idx.afriat_index == pytest.approx(0.5)
        assert idx.mci == pytest.approx(0.25)
        assert np.all(idx.varian_lower_bound >= idx.afriat_index - 1e-12)
        assert idx.varian_heuristic

    def test_too_large(self, violating_ds, cobb_douglas_ds):
        ds = violating_ds.append(cobb_douglas_ds.alpha[:12], cobb_douglas_ds.beta[:12])
        with pytest.raises(TooLargeForExact):
            rp.rationality_indices(ds)


class TestNecessity:
    """Data from budget-constrained maximizers pass the tests."""

    @pytest.mark.parametrize("utility", [CobbDouglas([0.3, 0.7]), CES([1.0, 2.0], 0.5), CES([1.0, 1.0], -1.0)])
    def test_maximizers(self, utility):
        probes = np.random.default_rng(5).uniform(0.5, 2.0, size=(15, 2))
        ds = BudgetDataset(probes, np.array([utility.demand(a) for a in probes]))
        assert rp.check_garp(ds).consistent
        rp.afriat_certificate(ds)
