import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st

from app.exceptions import InvalidArgumentError
from app.schemas import PcDescriptor, SimConfig, UniformCnDescriptor, UniformDescriptor
from app.services.dist import make_pc, make_uniform
from app.services.montecarlo import (
    SEED_BLOCK_ROWS,
    RunningStats,
    block_plan,
    dispatch_plan,
    evaluate_risk,
    mc_bias,
    mc_risk,
    mc_sweep,
)
from app.services.risk import brute_force_risk, exact_bias_gt, exact_risk_gt
from app.services.estimators import parse_estimator

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)


def config(dist, n, reps, seed=0, estimator="gt", threads=None) -> SimConfig:
    return SimConfig(n=n, reps=reps, seed=seed, estimator=estimator, dist=dist, threads=threads)


class TestRunningStats:
    def test_update_matches_batch(self):
        values = np.random.default_rng(0).normal(size=1000)
        streamed = RunningStats()
        for value in values:
            streamed.update(value)
        batch = RunningStats.from_array(values)
        assert streamed.count == batch.count
        assert streamed.mean == pytest.approx(batch.mean, rel=1e-12, abs=1e-15)
        assert streamed.variance == pytest.approx(np.var(values, ddof=1), rel=1e-12)
        assert (streamed.min, streamed.max) == (values.min(), values.max())

    def test_empty(self):
        stats = RunningStats.from_array(np.array([]))
        assert stats.count == 0
        assert stats.variance == 0.0
        assert stats.stderr == 0.0
        assert stats.merge(RunningStats.from_array([1.0, 3.0])).mean == 2.0

    @hypothesis_settings(max_examples=200, deadline=None)
    @given(st.lists(finite, min_size=1, max_size=50), st.lists(finite, min_size=1, max_size=50))
    def test_merge_equals_concatenation(self, left, right):
        merged = RunningStats.from_array(left).merge(RunningStats.from_array(right))
        whole = RunningStats.from_array(left + right)
        assert merged.count == whole.count
        assert merged.mean == pytest.approx(whole.mean, rel=1e-12, abs=1e-9)
        assert merged.m2 == pytest.approx(whole.m2, rel=1e-9, abs=1e-6)
        assert (merged.min, merged.max) == (whole.min, whole.max)

    @hypothesis_settings(max_examples=200, deadline=None)
    @given(
        st.lists(finite, min_size=1, max_size=30),
        st.lists(finite, min_size=1, max_size=30),
        st.lists(finite, min_size=1, max_size=30),
    )
    def test_merge_is_associative_and_commutative(self, a, b, c):
        sa, sb, sc = (RunningStats.from_array(x) for x in (a, b, c))
        left = sa.merge(sb).merge(sc)
        right = sa.merge(sb.merge(sc))
        swapped = sc.merge(sa).merge(sb)
        for other in (right, swapped):
            assert other.count == left.count
            assert other.mean == pytest.approx(left.mean, rel=1e-12, abs=1e-9)
            assert other.m2 == pytest.approx(left.m2, rel=1e-9, abs=1e-6)

    def test_to_dict(self):
        data = RunningStats.from_array([1.0, 2.0, 3.0]).to_dict()
        assert data["count"] == 3
        assert data["variance"] == pytest.approx(1.0)
        assert data["stderr"] == pytest.approx(np.sqrt(1 / 3))


class TestBlockPlan:
    def test_covers_all_replicates(self):
        plan = block_plan(100_003, 50)
        assert sum(plan) == 100_003
        assert max(plan) <= SEED_BLOCK_ROWS

    def test_caps_rows_by_sample_length(self):
        plan = block_plan(10, 2**21)
        assert plan == [2] * 5
        assert block_plan(10, 2) == [10]

    def test_ignores_memory_setting(self, settings, monkeypatch):
        before = block_plan(50_000, 50)
        monkeypatch.setattr(settings, "MC_BLOCK_ELEMENTS", 1000)
        assert block_plan(50_000, 50) == before

    def test_rejects_zero_replicates(self):
        with pytest.raises(InvalidArgumentError):
            block_plan(0, 5)


class TestDispatchPlan:
    def test_chunks_keep_block_order(self, settings, monkeypatch):
        monkeypatch.setattr(settings, "MC_BLOCK_ELEMENTS", 3 * 4096 * 50)
        plan = block_plan(100_003, 50)
        chunks = dispatch_plan(plan, 50, threads=1)
        assert [len(chunk) for chunk in chunks] == [3] * 8 + [1]
        assert [pair for chunk in chunks for pair in chunk] == list(enumerate(plan))

    def test_one_block_per_chunk_when_blocks_exceed_cap(self, settings, monkeypatch):
        monkeypatch.setattr(settings, "MC_BLOCK_ELEMENTS", 10)
        plan = block_plan(9000, 50)
        assert dispatch_plan(plan, 50, threads=1) == [[pair] for pair in enumerate(plan)]

    def test_spreads_blocks_over_workers(self):
        plan = block_plan(40_000, 50)
        assert len(dispatch_plan(plan, 50, threads=4)) >= 4


class TestRisk:
    def test_point_mass(self):
        risk, stderr, stats = mc_risk(config(UniformDescriptor(k=1), n=10, reps=500))
        assert risk == 0.0
        assert stderr == 0.0
        assert stats.count == 500

    def test_uniform_two_symbols(self):
        risk, stderr, _ = mc_risk(config(UniformDescriptor(k=2), n=2, reps=200_000, seed=7))
        assert abs(risk - 0.625) <= 4 * stderr

    @pytest.mark.slow
    def test_uniform_two_symbols_million_replicates(self):
        risk, stderr, _ = mc_risk(config(UniformDescriptor(k=2), n=2, reps=1_000_000, seed=7))
        assert abs(risk - 0.625) <= 3 * stderr

    def test_pc_family_matches_exact(self):
        risk, stderr, _ = mc_risk(config(PcDescriptor(p0=0.5, k=100), n=50, reps=50_000, seed=1))
        assert abs(risk - exact_risk_gt(make_pc(0.5, 100), 50).risk) <= 4 * stderr

    @pytest.mark.slow
    def test_worst_uniform_matches_exact(self):
        risk, stderr, _ = mc_risk(config(UniformDescriptor(k=1173), n=1000, reps=1_000_000, seed=3))
        assert abs(risk - exact_risk_gt(make_uniform(1173), 1000).risk) <= 3 * stderr

    def test_dirichlet_estimator_matches_enumeration(self):
        cfg = config(UniformDescriptor(k=3), n=3, reps=100_000, seed=5, estimator="dirichlet:1:3")
        risk, stderr, _ = mc_risk(cfg)
        expected = brute_force_risk(make_uniform(3), 3, parse_estimator("dirichlet:1:3")).risk
        assert abs(risk - expected) <= 4 * stderr

    def test_bit_identical_for_fixed_seed(self):
        cfg = config(PcDescriptor(p0=0.5, k=100), n=50, reps=20_000, seed=7)
        assert mc_risk(cfg)[:2] == mc_risk(cfg)[:2]

    def test_independent_of_worker_count(self):
        single = mc_risk(config(UniformDescriptor(k=2), n=2, reps=10_000, seed=9, threads=1))
        parallel = mc_risk(config(UniformDescriptor(k=2), n=2, reps=10_000, seed=9, threads=2))
        assert single[:2] == parallel[:2]
        assert single[2] == parallel[2]

    @pytest.mark.parametrize("block_elements", [1000, 50 * 4096, 2**30])
    def test_independent_of_memory_setting(self, settings, monkeypatch, block_elements):
        cfg = config(PcDescriptor(p0=0.5, k=100), n=50, reps=20_000, seed=7)
        expected = mc_risk(cfg)
        monkeypatch.setattr(settings, "MC_BLOCK_ELEMENTS", block_elements)
        assert mc_risk(cfg) == expected
        assert mc_risk(cfg.model_copy(update={"threads": 2})) == expected

    def test_coverage(self):
        covered = 0
        for seed in range(100):
            risk, stderr, _ = mc_risk(config(UniformDescriptor(k=2), n=2, reps=2000, seed=seed))
            covered += abs(risk - 0.625) <= 3 * stderr
        assert covered >= 95


class TestBias:
    def test_point_mass(self):
        assert mc_bias(config(UniformDescriptor(k=1), n=5, reps=300)) == (0.0, 0.0)

    def test_uniform_two_symbols(self):
        bias, stderr = mc_bias(config(UniformDescriptor(k=2), n=2, reps=200_000, seed=4))
        assert abs(bias - exact_bias_gt(make_uniform(2), 2)) <= 4 * stderr

    def test_bias_bound_on_large_alphabet(self):
        bias, stderr = mc_bias(config(UniformDescriptor(k=5000), n=1000, reps=5000, seed=8))
        assert abs(bias) <= 1e-3 + 3 * stderr


class TestEvaluateRisk:
    def test_exact_needs_good_turing(self):
        with pytest.raises(InvalidArgumentError):
            evaluate_risk(config(UniformDescriptor(k=3), n=3, reps=10, estimator="dirichlet:1:3"), "exact")

    def test_methods_agree_on_small_case(self):
        cfg = config(UniformDescriptor(k=3), n=4, reps=10)
        exact = evaluate_risk(cfg, "exact")
        brute = evaluate_risk(cfg, "brute")
        assert brute.risk == pytest.approx(exact.risk, rel=1e-12)
        assert evaluate_risk(cfg, "asymptotic").method == "asymptotic"


class TestSweep:
    def test_empty_values(self):
        with pytest.raises(InvalidArgumentError):
            mc_sweep(config(UniformCnDescriptor(c=1.0), n=100, reps=10), "c", [], "exact")

    def test_c_axis_peaks_at_worst_coefficient(self):
        values = [0.5, 1.0, 1.1729, 2.0]
        rows = mc_sweep(config(UniformCnDescriptor(c=1.0), n=2000, reps=10), "c", values, "exact")
        assert [row.value for row in rows] == values
        best = max(rows, key=lambda row: row.normalized_risk)
        assert best.value == 1.1729
        assert all(row.stderr is None for row in rows)

    def test_n_axis_monte_carlo(self):
        rows = mc_sweep(config(UniformCnDescriptor(c=1.0), n=10, reps=2000, seed=3), "n", [100, 1000], "mc")
        assert [row.n for row in rows] == [100, 1000]
        assert all(row.method == "monte_carlo" and row.stderr > 0 for row in rows)

    def test_k_axis(self):
        rows = mc_sweep(config(UniformDescriptor(k=2), n=20, reps=10), "k", [5, 50], "exact")
        assert rows[0].risk == pytest.approx(exact_risk_gt(make_uniform(5), 20).risk)
        assert rows[1].risk == pytest.approx(exact_risk_gt(make_uniform(50), 20).risk)

    def test_rows_are_reproducible(self):
        base = config(UniformDescriptor(k=20), n=30, reps=3000, seed=12)
        assert mc_sweep(base, "n", [30, 60], "mc") == mc_sweep(base, "n", [30, 60], "mc")

    def test_rejects_fractional_n(self):
        with pytest.raises(InvalidArgumentError):
            mc_sweep(config(UniformDescriptor(k=2), n=20, reps=10), "n", [10.5], "exact")
