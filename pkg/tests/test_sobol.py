import json

import numpy as np
import pytest

from conceptlens import sobol
from conceptlens.errors import ConfigurationError, PreconditionError

from oracles import mc_total_indices, star_discrepancy_1d

ADDITIVE_WEIGHTS = np.array([1.0, 2.0, 3.0])
# Analytic total indices of Y = sum a_i M_i with independent U(0,1) masks:
# S_Ti = a_i^2 / sum a_j^2 = (1/14, 4/14, 9/14).
ADDITIVE_TRUTH = np.array([1.0, 4.0, 9.0]) / 14.0


def additive_output(masks):
    return np.asarray(masks) @ ADDITIVE_WEIGHTS


class StubProvider:
    """classify-only provider: linear head on activations."""

    def __init__(self, head):
        self.head = np.asarray(head, dtype=np.float64)

    def classify(self, activations):
        return np.asarray(activations) @ self.head


class StubModel:
    def __init__(self, W, U):
        self.W = np.asarray(W, dtype=np.float64)
        self.U = np.asarray(U, dtype=np.float64)
        self.r = self.W.shape[1]
        self.p = self.W.shape[0]


class TestPerturb:
    def test_identity_mask_exact(self):
        U = np.array([[2.0, 4.0], [0.5, 1.5]])
        out = sobol.perturb(U, np.ones(2), mu=0.0)
        assert np.array_equal(out, U)

    def test_zero_mask_zero_baseline(self):
        U = np.array([[2.0, 4.0]])
        assert np.array_equal(sobol.perturb(U, np.zeros(2), mu=0.0), np.zeros((1, 2)))

    def test_hand_hadamard(self):
        out = sobol.perturb(np.array([[2.0, 4.0]]), np.array([0.5, 1.0]), mu=0.0)
        np.testing.assert_array_equal(out, [[1.0, 4.0]])

    def test_nonzero_baseline(self):
        out = sobol.perturb(np.array([[2.0, 4.0]]), np.array([0.0, 1.0]), mu=7.0)
        np.testing.assert_array_equal(out, [[7.0, 4.0]])

    def test_mask_out_of_range_rejected(self):
        with pytest.raises(PreconditionError):
            sobol.perturb(np.ones((1, 2)), np.array([0.5, 1.2]))


class TestGenerateDesign:
    def test_bernoulli_entries_binary(self):
        design = sobol.generate_design(64, 3, mask_law="bernoulli", seed=0)
        values = np.unique(np.concatenate([design.M_A.ravel(), design.M_B.ravel()]))
        assert set(values).issubset({0.0, 1.0})

    def test_same_seed_identical(self):
        d1 = sobol.generate_design(128, 4, seed=9)
        d2 = sobol.generate_design(128, 4, seed=9)
        assert np.array_equal(d1.M_A, d2.M_A)
        assert np.array_equal(d1.M_B, d2.M_B)

    def test_entries_in_unit_interval(self):
        for sampler in sobol.SAMPLERS:
            d = sobol.generate_design(64, 5, sampler=sampler, seed=1)
            for M in (d.M_A, d.M_B):
                assert M.min() >= 0.0 and M.max() <= 1.0

    def test_ab_block_differs_only_in_column_i(self):
        d = sobol.generate_design(32, 4, seed=2)
        for i in range(4):
            block = d.ab_block(i)
            np.testing.assert_array_equal(block[:, i], d.M_A[:, i])
            mask = np.ones(4, dtype=bool)
            mask[i] = False
            np.testing.assert_array_equal(block[:, mask], d.M_B[:, mask])

    def test_power_of_two_required_for_qmc(self):
        with pytest.raises(ConfigurationError):
            sobol.generate_design(100, 3)
        sobol.generate_design(100, 3, sampler="pseudo_random")  # fine

    def test_dimension_cap_for_qmc(self):
        with pytest.raises(ConfigurationError):
            sobol.generate_design(64, 65)

    def test_low_discrepancy_beats_random(self):
        # Unscrambled base sequence stratifies [0,1] perfectly at powers of two.
        d_qmc = sobol.generate_design(16, 1, seed=0, scramble=False)
        d_rand = sobol.generate_design(16, 1, sampler="pseudo_random", seed=0)
        disc_qmc = star_discrepancy_1d(d_qmc.M_A[:, 0])
        disc_rand = star_discrepancy_1d(d_rand.M_A[:, 0])
        assert disc_qmc < disc_rand

    def test_unknown_sampler_rejected(self):
        with pytest.raises(ConfigurationError):
            sobol.generate_design(64, 2, sampler="halton")


class TestJansenEstimator:
    def test_monte_carlo_oracle_confirms_analytic_values(self):
        mc = mc_total_indices(additive_output, 3, 200_000, seed=7)
        assert np.max(np.abs(mc - ADDITIVE_TRUTH)) < 0.01

    def test_additive_model_within_tolerance(self):
        design = sobol.generate_design(8192, 3, seed=0)
        raw, variance = sobol.jansen_total_indices(design, additive_output)
        assert np.max(np.abs(raw - ADDITIVE_TRUTH)) <= 0.02
        # Var(sum a_i M_i) = sum a_i^2 / 12 for independent U(0,1)
        assert variance == pytest.approx(np.sum(ADDITIVE_WEIGHTS**2) / 12.0, rel=0.05)

    def test_additive_indices_sum_to_one(self):
        design = sobol.generate_design(8192, 3, seed=1)
        raw, _ = sobol.jansen_total_indices(design, additive_output)
        assert raw.sum() == pytest.approx(1.0, abs=0.03)

    def test_zero_effect_concept_raw_above_negative_floor(self):
        a = np.array([1.0, 2.0, 3.0, 0.0])
        design = sobol.generate_design(4096, 4, seed=2)
        raw, _ = sobol.jansen_total_indices(design, lambda M: np.asarray(M) @ a)
        assert np.all(raw > -0.05)
        assert abs(raw[3]) <= 0.02

    def test_error_at_least_halves_when_n_quadruples(self):
        # Scrambled low-discrepancy sampling converges at least at the
        # Monte Carlo trend (often much faster), so quadrupling the design
        # count should cut the mean error to <= 0.65x (half +30% slack).
        def mean_err(n):
            errs = []
            for s in range(10):
                d = sobol.generate_design(n, 3, seed=s)
                raw, _ = sobol.jansen_total_indices(d, additive_output)
                errs.append(np.mean(np.abs(raw - ADDITIVE_TRUTH)))
            return np.mean(errs)

        e_small, e_large = mean_err(512), mean_err(2048)
        assert e_large <= 0.65 * e_small

    def test_bernoulli_masks_same_indices_for_additive(self):
        design = sobol.generate_design(8192, 3, mask_law="bernoulli", seed=3)
        raw, variance = sobol.jansen_total_indices(design, additive_output)
        assert np.max(np.abs(raw - ADDITIVE_TRUTH)) <= 0.02
        assert variance == pytest.approx(np.sum(ADDITIVE_WEIGHTS**2) / 4.0, rel=0.05)


class TestEstimateTotalIndices:
    def make_single_signal(self, n_rows=5, seed=0):
        # Orthonormal concept columns; head reads only concept 0's direction.
        W = np.eye(4)[:, :3]
        rng = np.random.default_rng(seed)
        U = rng.random((n_rows, 3)) + 0.5
        head = np.zeros((4, 2))
        head[:, 1] = W[:, 0]
        return StubModel(W, U), StubProvider(head)

    def test_single_active_concept_takes_all_variance(self):
        model, provider = self.make_single_signal()
        design = sobol.generate_design(4096, 3, seed=0)
        report = sobol.estimate_total_indices(model, provider, class_id=1, design=design)
        assert report.indices[0] == pytest.approx(1.0, abs=0.02)
        assert np.all(report.indices[1:] <= 0.02)
        assert report.ranking[0] == 0

    def test_duplicate_concepts_symmetric(self):
        rng = np.random.default_rng(4)
        base = rng.random((6, 1))
        W = np.zeros((5, 3))
        W[0, 0] = W[0, 1] = 1.0  # concept 1 clones concept 0
        W[1, 2] = 1.0
        U = np.hstack([base / 2, base / 2, rng.random((6, 1))])
        head = np.zeros((5, 2))
        head[0, 1] = 1.0
        head[1, 1] = 0.7
        model, provider = StubModel(W, U), StubProvider(head)
        design = sobol.generate_design(8192, 3, seed=5)
        report = sobol.estimate_total_indices(model, provider, class_id=1, design=design)
        assert abs(report.indices[0] - report.indices[1]) <= 0.03

        def output_fn(masks):
            masks = np.asarray(masks)
            out = np.empty(masks.shape[0])
            for j, m in enumerate(masks):
                out[j] = provider.classify((U * m) @ W.T)[:, 1].mean()
            return out

        mc = mc_total_indices(output_fn, 3, 100_000, seed=6)
        assert abs(mc[0] - mc[1]) <= 0.03
        assert np.max(np.abs(mc - report.indices)) <= 0.03

    def test_all_ones_mask_reproduces_unperturbed_exactly(self):
        model, provider = self.make_single_signal()
        unperturbed = provider.classify(model.U @ model.W.T)
        masked = provider.classify(sobol.perturb(model.U, np.ones(3), 0.0) @ model.W.T)
        assert np.array_equal(unperturbed, masked)

    def test_ranking_invariant_under_logit_scaling(self):
        rng = np.random.default_rng(8)
        W = np.eye(6)[:, :4]
        U = rng.random((7, 4))
        head = np.zeros((6, 2))
        head[:4, 1] = rng.random(4) + 0.2
        design = sobol.generate_design(2048, 4, seed=9)
        r1 = sobol.estimate_total_indices(StubModel(W, U), StubProvider(head), 1, design)
        r2 = sobol.estimate_total_indices(StubModel(W, U), StubProvider(head * 2.5), 1, design)
        np.testing.assert_array_equal(r1.ranking, r2.ranking)
        np.testing.assert_allclose(r1.indices, r2.indices, atol=1e-9)

    def test_degenerate_variance_flagged_not_raised(self):
        design = sobol.generate_design(64, 2, seed=0)
        report = sobol.estimate_total_indices(
            None, None, 0, design, output_fn=lambda M: np.ones(len(M))
        )
        assert report.degenerate
        np.testing.assert_array_equal(report.indices, np.zeros(2))

    def test_indices_clipped_raw_retained(self):
        design = sobol.generate_design(64, 2, seed=1)
        rng = np.random.default_rng(0)
        report = sobol.estimate_total_indices(
            None, None, 0, design, output_fn=lambda M: rng.random(len(M))
        )
        assert np.all(report.indices >= 0.0)
        assert report.raw_indices.shape == (2,)

    def test_design_model_mismatch(self):
        model, provider = self.make_single_signal()
        design = sobol.generate_design(64, 5, seed=0)
        with pytest.raises(ConfigurationError):
            sobol.estimate_total_indices(model, provider, 1, design)


class TestImportanceReport:
    def test_json_roundtrip(self):
        report = sobol.ImportanceReport(
            class_id=1,
            indices=np.array([0.2, 0.0, 0.7]),
            raw_indices=np.array([0.2, -0.01, 0.7]),
            output_variance=1.5,
            n_designs=256,
            mask_law="continuous_uniform",
        )
        back = sobol.ImportanceReport.from_json(report.to_json())
        assert back.class_id == 1
        assert back.n_designs == 256
        np.testing.assert_array_equal(back.indices, report.indices)
        np.testing.assert_array_equal(back.raw_indices, report.raw_indices)
        np.testing.assert_array_equal(back.ranking, report.ranking)

    def test_ranking_is_descending_argsort(self):
        report = sobol.ImportanceReport(
            class_id=0,
            indices=np.array([0.1, 0.5, 0.3]),
            raw_indices=np.array([0.1, 0.5, 0.3]),
            output_variance=1.0,
            n_designs=64,
            mask_law="continuous_uniform",
        )
        np.testing.assert_array_equal(report.ranking, [1, 2, 0])

    def test_ties_break_to_lower_concept(self):
        report = sobol.ImportanceReport(
            class_id=0,
            indices=np.array([0.5, 0.5, 0.1]),
            raw_indices=np.array([0.5, 0.5, 0.1]),
            output_variance=1.0,
            n_designs=64,
            mask_law="continuous_uniform",
        )
        np.testing.assert_array_equal(report.ranking, [0, 1, 2])

    def test_json_is_valid_and_sorted(self):
        report = sobol.ImportanceReport(
            class_id=0,
            indices=np.array([0.5]),
            raw_indices=np.array([0.5]),
            output_variance=1.0,
            n_designs=4,
            mask_law="bernoulli",
        )
        rec = json.loads(report.to_json())
        assert rec["mask_law"] == "bernoulli"
        assert rec["N"] == 4
        assert rec["indices"][0]["concept"] == 0
