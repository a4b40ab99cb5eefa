import numpy as np
import pytest

from kgacc.graph import DeltaBatch, Triple, apply_delta
from kgacc.sampling import (ClusterDraw, DrawBatch, ReservoirEntry,
                            ReservoirState, SamplingDesign, rcs_draw,
                            reservoir_keys, reservoir_seed,
                            reservoir_subsample, reservoir_update, srs_batch_from_order,
                            srs_draw, srs_order, twcs_draw, wcs_draw)

from conftest import ares_inclusion_probs, make_graph

scipy_stats = pytest.importorskip("scipy.stats")

P_FLOOR = 1e-4  # deterministic seeds; failures mean real distribution bugs


def delta_of_sizes(batch_id, sizes, prefix="d"):
    groups = []
    for i, size in enumerate(sizes):
        eid = f"{prefix}{batch_id}_{i}"
        groups.append((eid, tuple(Triple(eid, "p", f"o{j}")
                                  for j in range(size))))
    return DeltaBatch(batch_id, tuple(groups))


class TestDesign:
    def test_round_trip(self):
        d = SamplingDesign("stratified_twcs", m=4, strata_method="cum_sqrt_f",
                           strata_count=3)
        assert SamplingDesign.from_dict(d.to_dict()) == d

    def test_m_required(self):
        with pytest.raises(ValueError, match="requires m"):
            SamplingDesign("twcs")

    def test_m_forbidden(self):
        with pytest.raises(ValueError, match="does not take m"):
            SamplingDesign("srs", m=3)

    def test_strata_only_for_stratified(self):
        with pytest.raises(ValueError, match="strata"):
            SamplingDesign("wcs", strata_count=2)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown design"):
            SamplingDesign("pps")


class TestSrs:
    def test_without_replacement_and_exhaustive(self, toy_abc):
        g, _ = toy_abc
        batch = srs_draw(g, g.triple_count, seed=3)
        positions = sorted(int(d.positions(g)[0]) for d in batch.draws)
        assert positions == list(range(6))

    def test_bounds(self, toy_abc):
        g, _ = toy_abc
        with pytest.raises(ValueError):
            srs_draw(g, 0, seed=1)
        with pytest.raises(ValueError):
            srs_draw(g, 7, seed=1)

    def test_order_prefixes_are_wor(self, toy_abc):
        g, _ = toy_abc
        order = srs_order(g, seed=5)
        assert sorted(order.tolist()) == list(range(6))
        seen = []
        for b in range(3):
            batch = srs_batch_from_order(g, order, 5, b, 2)
            seen.extend(int(d.positions(g)[0]) for d in batch.draws)
        assert sorted(seen) == list(range(6))
        with pytest.raises(ValueError, match="exhausted"):
            srs_batch_from_order(g, order, 5, 3, 2)

    def test_deterministic(self, toy_abc):
        g, _ = toy_abc
        assert np.array_equal(srs_order(g, 5), srs_order(g, 5))
        assert not np.array_equal(srs_order(g, 5), srs_order(g, 6))

    def test_first_position_uniform(self, toy_abc):
        g, _ = toy_abc
        counts = np.zeros(6, dtype=int)
        for seed in range(3000):
            counts[srs_order(g, seed)[0]] += 1
        _, p = scipy_stats.chisquare(counts)
        assert p > P_FLOOR


class TestRcs:
    def test_exhaustive_annotation(self, toy_abc):
        g, _ = toy_abc
        batch = rcs_draw(g, 4, seed=2)
        for d in batch.draws:
            assert list(d.local) == list(range(d.cluster_size))

    def test_uniform_over_clusters(self, toy_abc):
        g, _ = toy_abc
        batch = rcs_draw(g, 6000, seed=2)
        counts = np.bincount([d.cluster_index for d in batch.draws],
                             minlength=3)
        _, p = scipy_stats.chisquare(counts)
        assert p > P_FLOOR

    def test_batches_differ(self, toy_abc):
        g, _ = toy_abc
        a = rcs_draw(g, 10, seed=2, batch_index=0)
        b = rcs_draw(g, 10, seed=2, batch_index=1)
        assert [d.cluster_index for d in a.draws] != \
               [d.cluster_index for d in b.draws]


class TestWcs:
    def test_pps_first_stage(self, toy_abc):
        g, _ = toy_abc
        batch = wcs_draw(g, 6000, seed=7)
        counts = np.bincount([d.cluster_index for d in batch.draws],
                             minlength=3)
        _, p = scipy_stats.chisquare(counts, f_exp=6000 * g.pps_weights)
        assert p > P_FLOOR

    def test_exhaustive(self, toy_abc):
        g, _ = toy_abc
        for d in wcs_draw(g, 5, seed=7).draws:
            assert len(d.local) == d.cluster_size


class TestTwcs:
    def test_second_stage_shape(self, toy_abc):
        g, _ = toy_abc
        batch = twcs_draw(g, 40, m=2, seed=9)
        for d in batch.draws:
            assert len(d.local) == min(d.cluster_size, 2)
            assert len(set(d.local.tolist())) == len(d.local)
            assert d.local.max() < d.cluster_size

    def test_exhaustive_when_m_covers(self, toy_abc):
        g, _ = toy_abc
        for d in twcs_draw(g, 20, m=3, seed=9).draws:
            assert len(d.local) == d.cluster_size

    def test_first_stage_pps(self, toy_abc):
        g, _ = toy_abc
        counts = np.zeros(3, dtype=int)
        batch = twcs_draw(g, 6000, m=2, seed=9)
        for d in batch.draws:
            counts[d.cluster_index] += 1
        _, p = scipy_stats.chisquare(counts, f_exp=6000 * g.pps_weights)
        assert p > P_FLOOR

    def test_second_stage_subsets_uniform(self, toy_abc):
        g, _ = toy_abc  # cluster 1 has size 3; subsets of 2 come in 3 kinds
        from collections import Counter
        subsets = Counter()
        batch = twcs_draw(g, 9000, m=2, seed=9)
        for d in batch.draws:
            if d.cluster_index == 1:
                subsets[tuple(sorted(d.local.tolist()))] += 1
        counts = [subsets[(0, 1)], subsets[(0, 2)], subsets[(1, 2)]]
        assert sum(counts) == sum(subsets.values())
        _, p = scipy_stats.chisquare(counts)
        assert p > P_FLOOR

    def test_restricted_pool(self, toy_abc):
        g, _ = toy_abc
        batch = twcs_draw(g, 50, m=2, seed=9, cluster_indices=[0, 2])
        drawn = {d.cluster_index for d in batch.draws}
        assert drawn <= {0, 2}
        # restricted weights renormalise to sizes 2:1
        counts = np.bincount([d.cluster_index for d in batch.draws],
                             minlength=3)
        assert counts[0] > counts[2]

    def test_deterministic_per_batch_index(self, toy_abc):
        g, _ = toy_abc
        a = twcs_draw(g, 10, m=2, seed=9, batch_index=4)
        b = twcs_draw(g, 10, m=2, seed=9, batch_index=4)
        c = twcs_draw(g, 10, m=2, seed=9, batch_index=5)
        assert a.to_dict() == b.to_dict()
        assert a.to_dict() != c.to_dict()

    def test_validation(self, toy_abc):
        g, _ = toy_abc
        with pytest.raises(ValueError):
            twcs_draw(g, 0, m=2, seed=1)
        with pytest.raises(ValueError):
            twcs_draw(g, 2, m=0, seed=1)


class TestBatchSerialization:
    def test_round_trip(self, toy_abc):
        g, _ = toy_abc
        batch = twcs_draw(g, 5, m=2, seed=1, stratum=2)
        back = DrawBatch.from_dict(batch.to_dict())
        assert back.design_kind == batch.design_kind
        assert back.n_units == batch.n_units
        for a, b in zip(back.draws, batch.draws):
            assert a.cluster_index == b.cluster_index
            assert np.array_equal(a.local, b.local)
            assert a.stratum == b.stratum == 2


class TestReservoirSeed:
    def test_keys_in_unit_interval(self, toy_abc):
        g, _ = toy_abc
        keys = reservoir_keys(g, seed=1)
        assert keys.shape == (3,)
        assert ((keys > 0) & (keys < 1)).all()

    def test_capacity_covers_graph(self, toy_abc):
        g, _ = toy_abc
        state = reservoir_seed(g, capacity=5, m=2, seed=1)
        assert sorted(state.cluster_indices()) == [0, 1, 2]
        assert state.clusters_seen == 3

    def test_keeps_largest_keys(self, toy_abc):
        g, _ = toy_abc
        keys = reservoir_keys(g, seed=4)
        state = reservoir_seed(g, capacity=2, m=2, seed=4)
        expect = set(np.argsort(-keys)[:2].tolist())
        assert set(state.cluster_indices()) == expect

    def test_inclusion_matches_race_probabilities(self):
        g, _ = make_graph({"A": [1], "B": [1, 1], "C": [1, 1, 1]})
        probs = [float(p) for p in ares_inclusion_probs([1, 2, 3], 2)]
        trials = 3000
        counts = np.zeros(3)
        for seed in range(trials):
            for ci in reservoir_seed(g, 2, 1, seed).cluster_indices():
                counts[ci] += 1
        for ci in range(3):
            se = (probs[ci] * (1 - probs[ci]) / trials) ** 0.5
            assert counts[ci] / trials == pytest.approx(probs[ci],
                                                        abs=4 * se), f"cluster {ci}"


class TestReservoirUpdate:
    def test_underfull_admits_everything(self, toy_abc):
        g, _ = toy_abc
        state = reservoir_seed(g, capacity=10, m=2, seed=1)
        admitted, evicted = reservoir_update(state, delta_of_sizes(1, [2, 1]),
                                             seed=1)
        assert len(admitted) == 2 and not evicted
        assert state.clusters_seen == 5
        # admitted cluster indices continue the stream count
        assert [e.cluster_index for e in admitted] == [3, 4]

    def test_capacity_is_preserved(self, toy_abc):
        g, _ = toy_abc
        state = reservoir_seed(g, capacity=2, m=2, seed=1)
        admitted, evicted = reservoir_update(
            state, delta_of_sizes(1, [3] * 30), seed=1)
        assert len(state.entries) == 2
        assert len(admitted) == len(evicted)
        assert state.clusters_seen == 33

    def test_threshold_never_decreases(self, toy_abc):
        g, _ = toy_abc
        state = reservoir_seed(g, capacity=2, m=2, seed=3)
        last = state.threshold()
        for b in range(1, 6):
            reservoir_update(state, delta_of_sizes(b, [2] * 10), seed=3)
            now = state.threshold()
            assert now >= last
            last = now

    def test_huge_weight_is_admitted(self, toy_abc):
        g, _ = toy_abc
        state = reservoir_seed(g, capacity=2, m=2, seed=1)
        admitted, _ = reservoir_update(
            state, delta_of_sizes(1, [1_000_000_000]), seed=1)
        assert len(admitted) == 1

    def test_eviction_removes_current_minimum(self, toy_abc):
        g, _ = toy_abc
        state = reservoir_seed(g, capacity=2, m=2, seed=6)
        before = {e.cluster_index: e.key for e in state.entries}
        _, evicted = reservoir_update(state, delta_of_sizes(1, [50] * 5),
                                      seed=6)
        if evicted:  # overwhelmingly likely with five size-50 groups
            assert evicted[0].key == min(before.values())

    def test_equal_keys_evict_older(self):
        state = ReservoirState(capacity=2, m=1, entries=[
            ReservoirEntry(0.5, 0, 0, "A", 1),
            ReservoirEntry(0.5, 1, 1, "B", 1),
        ], clusters_seen=2, next_order=2)
        assert state.min_entry_index() == 0  # same key, older order loses

    def test_final_sample_is_order_independent_in_law(self):
        # Streaming 1 then {2, 3, 2} must match the joint top-k law over
        # weights [1, 2, 3, 2].
        g, _ = make_graph({"A": [1]})
        weights = [1, 2, 3, 2]
        probs = [float(p) for p in ares_inclusion_probs(weights, 2)]
        trials = 3000
        counts = np.zeros(4)
        for seed in range(trials):
            state = reservoir_seed(g, 2, 1, seed)
            reservoir_update(state, delta_of_sizes(1, [2, 3, 2]), seed)
            for ci in state.cluster_indices():
                counts[ci] += 1
        for ci in range(4):
            se = (probs[ci] * (1 - probs[ci]) / trials) ** 0.5
            assert counts[ci] / trials == pytest.approx(probs[ci],
                                                        abs=4 * se), f"cluster {ci}"

    def test_admission_rate_follows_harmonic_law(self):
        # uniform weights: E[admissions from N1 to N2] = k (H(N2) - H(N1))
        g, _ = make_graph({f"e{i}": [1] for i in range(50)})
        k, n1, n2 = 5, 50, 200
        expect = k * (np.sum(1.0 / np.arange(n1 + 1, n2 + 1)))
        trials = 1500
        total = 0
        for seed in range(trials):
            state = reservoir_seed(g, k, 1, seed)
            admitted, _ = reservoir_update(state,
                                           delta_of_sizes(1, [1] * (n2 - n1)),
                                           seed)
            total += len(admitted)
        se = (expect / trials) ** 0.5  # Poisson-ish scale, generous
        assert total / trials == pytest.approx(expect, abs=4 * se)


class TestReservoirSubsample:
    def test_small_cluster_exhaustive(self):
        e = ReservoirEntry(0.5, 0, 3, "A", 2)
        assert reservoir_subsample(e, 4, seed=1).tolist() == [0, 1]

    def test_reproducible_and_valid(self):
        e = ReservoirEntry(0.5, 0, 7, "A", 30)
        a = reservoir_subsample(e, 4, seed=1)
        b = reservoir_subsample(e, 4, seed=1)
        assert np.array_equal(a, b)
        assert len(set(a.tolist())) == 4
        assert a.max() < 30

    def test_keyed_by_cluster_index(self):
        a = reservoir_subsample(ReservoirEntry(0.5, 0, 7, "A", 30), 4, seed=1)
        b = reservoir_subsample(ReservoirEntry(0.9, 3, 8, "A", 30), 4, seed=1)
        assert not np.array_equal(a, b)


class TestStateSerialization:
    def test_round_trip(self, toy_abc):
        g, _ = toy_abc
        state = reservoir_seed(g, capacity=2, m=2, seed=1)
        state.entries[0].local = np.array([0, 1], dtype=np.int64)
        state.entries[0].labels = np.array([1, 0], dtype=np.uint8)
        back = ReservoirState.from_dict(state.to_dict())
        assert back.capacity == state.capacity
        assert back.clusters_seen == state.clusters_seen
        assert back.entries[0].mean == 0.5
        assert back.entries[1].labels is None
