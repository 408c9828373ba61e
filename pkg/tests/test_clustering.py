import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
import synth
from wsiclust import clustering
from wsiclust.errors import EmptyCluster, InvalidK, SingleCluster
from wsiclust.features import FeatureMatrix


def _two_pairs():
    """Four points in two obvious pairs; the optimal 2-split has objective 1."""
    ids = tuple(f"s:{i}:0" for i in range(4))
    return FeatureMatrix(ids, np.array([[0.0], [1.0], [10.0], [11.0]]))


class TestKmeans:
    def test_k_bounds(self):
        feats = synth.random_features(6, 2)
        with pytest.raises(InvalidK):
            clustering.kmeans(feats, 0, seed=0)
        with pytest.raises(InvalidK):
            clustering.kmeans(feats, 7, seed=0)

    def test_max_iter_bound(self):
        with pytest.raises(ValueError):
            clustering.kmeans(synth.random_features(6, 2), 2, seed=0, max_iter=0)

    def test_unknown_init(self):
        with pytest.raises(ValueError):
            clustering.kmeans(synth.random_features(6, 2), 2, seed=0, init="best")

    def test_k_equals_n_is_exact(self):
        feats = synth.random_features(8, 3, seed=5)
        model = clustering.kmeans(feats, 8, seed=2)
        assert model.objective == 0.0
        assert sorted(model.assignments.values()) == list(range(8))

    def test_single_cluster_centroid_is_the_mean(self):
        feats = synth.random_features(12, 4, seed=3)
        model = clustering.kmeans(feats, 1, seed=0)
        assert np.allclose(model.centroids[0], feats.data.mean(axis=0), atol=1e-12)
        expected = ((feats.data - feats.data.mean(axis=0)) ** 2).sum()
        assert model.objective == pytest.approx(expected, rel=1e-12)

    def test_recovers_two_pairs(self):
        model = clustering.kmeans_best(_two_pairs(), 2, seed=0, restarts=5)
        assert model.objective == pytest.approx(1.0, abs=1e-12)
        a = model.assignments
        assert a["s:0:0"] == a["s:1:0"]
        assert a["s:2:0"] == a["s:3:0"]
        assert a["s:0:0"] != a["s:2:0"]

    def test_tie_breaks_to_lowest_index_and_empty_cluster_is_reseeded(self):
        # Seed 1 draws both initial centers from the coincident zero points,
        # so every region starts equidistant from both centroids and cluster 1
        # starts empty. The far point must be claimed as its new center.
        feats = FeatureMatrix(("s:0:0", "s:1:0", "s:2:0"), np.array([[0.0], [0.0], [10.0]]))
        model = clustering.kmeans(feats, 2, seed=1)
        assert model.j_history[0] == 100.0  # guards the degenerate-init premise
        assert model.assignments == {"s:0:0": 0, "s:1:0": 0, "s:2:0": 1}
        assert model.objective == 0.0
        assert np.array_equal(model.centroids, [[0.0], [10.0]])

    def test_converged_fit_is_a_fixed_point(self):
        feats = synth.blob_features(4, per=25, d=3, seed=11)
        model = clustering.kmeans(feats, 4, seed=7)
        data = feats.data
        labels = np.array([model.assignments[rid] for rid in feats.region_ids])
        # every region sits with its nearest centroid
        d2 = ((data[:, None, :] - model.centroids[None, :, :]) ** 2).sum(axis=2)
        assigned = d2[np.arange(len(labels)), labels]
        assert np.all(assigned <= d2.min(axis=1) + 1e-9)
        # every centroid is exactly its members' mean
        for c in range(model.k):
            members = data[labels == c]
            assert members.size
            assert np.allclose(model.centroids[c], members.mean(axis=0), atol=1e-9)

    def test_history_ends_at_the_reported_objective(self):
        feats = synth.random_features(30, 3, seed=1)
        model = clustering.kmeans(feats, 4, seed=9)
        assert model.j_history[-1] == model.objective
        assert len(model.j_history) == model.iterations + 1

    def test_deterministic_for_a_fixed_seed(self):
        feats = synth.random_features(40, 5, seed=2)
        one = clustering.kmeans(feats, 3, seed=13)
        two = clustering.kmeans(feats, 3, seed=13)
        assert one.assignments == two.assignments
        assert np.array_equal(one.centroids, two.centroids)
        assert one.j_history == two.j_history

    def test_plus_plus_init_converges(self):
        feats = synth.blob_features(3, per=20, seed=4)
        model = clustering.kmeans(feats, 3, seed=0, init="plus-plus")
        assert model.k == 3
        assert len({model.assignments[rid] for rid in feats.region_ids}) == 3

    @settings(max_examples=60, deadline=None)
    @given(
        n=st.integers(5, 40),
        d=st.integers(1, 4),
        k=st.integers(1, 5),
        data_seed=st.integers(0, 999),
        fit_seed=st.integers(0, 999),
    )
    def test_objective_never_increases(self, n, d, k, data_seed, fit_seed):
        feats = synth.random_features(n, d, seed=data_seed)
        # a short iteration cap also exercises the stop-at-max_iter path
        model = clustering.kmeans(feats, min(k, n), seed=fit_seed, max_iter=6)
        for prev, nxt in zip(model.j_history, model.j_history[1:]):
            assert nxt <= prev + 1e-9 * max(1.0, prev)


class TestKmeansBest:
    def test_restart_bound(self):
        with pytest.raises(ValueError):
            clustering.kmeans_best(_two_pairs(), 2, seed=0, restarts=0)

    def test_keeps_the_lowest_objective(self):
        feats = synth.random_features(60, 4, seed=8)
        best = clustering.kmeans_best(feats, 5, seed=21, restarts=5)
        singles = [
            clustering.kmeans(feats, 5, seed=clustering.derive_seed(21, 5, r))
            for r in range(5)
        ]
        assert best.objective == min(m.objective for m in singles)
        assert any(best.objective <= m.objective for m in singles)

    def test_restart_seeds_are_distinct(self):
        seeds = {clustering.derive_seed(0, 4, r) for r in range(20)}
        assert len(seeds) == 20


class TestSilhouette:
    def test_hand_worked_pairs(self):
        feats = _two_pairs()
        model = clustering.kmeans_best(feats, 2, seed=0, restarts=5)
        report = clustering.silhouette_scores(feats, model)
        outer = report.per_region["s:0:0"]
        assert outer.intra == 1.0
        assert outer.nearest == 10.5
        assert abs(outer.score - 9.5 / 10.5) < 1e-12
        inner = report.per_region["s:1:0"]
        assert inner.nearest == 9.5
        assert abs(inner.score - 8.5 / 9.5) < 1e-12
        assert abs(report.mean_score - 0.899749373433584) < 1e-12

    def test_matches_brute_force(self):
        for trial in range(3):
            feats = synth.random_features(40 + trial, 3, seed=trial)
            model = clustering.kmeans(feats, 4, seed=trial)
            report = clustering.silhouette_scores(feats, model)
            labels = [model.assignments[rid] for rid in feats.region_ids]
            expected = oracles.silhouette_brute(feats.data, labels)
            for rid, want in zip(feats.region_ids, expected):
                assert report.per_region[rid].score == pytest.approx(want, abs=1e-9)
            assert report.mean_score == pytest.approx(np.mean(expected), abs=1e-9)

    def test_singleton_cluster_scores_zero(self):
        feats = FeatureMatrix(("s:0:0", "s:1:0", "s:2:0"), np.array([[0.0], [0.2], [9.0]]))
        model = clustering.ClusterModel(
            centroids=np.array([[0.1], [9.0]]),
            assignments={"s:0:0": 0, "s:1:0": 0, "s:2:0": 1},
            k=2,
            objective=0.02,
            iterations=1,
            seed=0,
        )
        report = clustering.silhouette_scores(feats, model)
        assert report.per_region["s:2:0"].score == 0.0
        assert report.per_region["s:2:0"].intra == 0.0
        assert report.per_region["s:2:0"].nearest > 0.0

    def test_single_populated_cluster_rejected(self):
        feats = synth.random_features(5, 2)
        model = clustering.kmeans(feats, 1, seed=0)
        with pytest.raises(SingleCluster):
            clustering.silhouette_scores(feats, model)

    def test_sample_cap(self):
        feats = synth.blob_features(3, per=20, seed=6)
        model = clustering.kmeans_best(feats, 3, seed=0)
        report = clustering.silhouette_scores(feats, model, sample=10, seed=5)
        assert len(report.sample_ids) == 10
        again = clustering.silhouette_scores(feats, model, sample=10, seed=5)
        assert report.sample_ids == again.sample_ids
        assert report.mean_score == again.mean_score
        # a cap at or above the population is a no-op
        full = clustering.silhouette_scores(feats, model, sample=60)
        assert len(full.sample_ids) == 60

    def test_sample_cap_bound(self):
        feats = synth.random_features(6, 2)
        model = clustering.kmeans(feats, 2, seed=0)
        with pytest.raises(ValueError):
            clustering.silhouette_scores(feats, model, sample=1)

    def test_explicit_sample_restricts_the_population(self):
        feats = synth.random_features(12, 2, seed=9)
        model = clustering.kmeans(feats, 3, seed=3)
        keep = [rid for rid in feats.region_ids if model.assignments[rid] != 2][:6]
        report = clustering.silhouette_scores(feats, model, sample=keep)
        assert set(report.sample_ids) == set(keep)
        sub = feats.subset(list(report.sample_ids))
        labels = [model.assignments[rid] for rid in sub.region_ids]
        expected = oracles.silhouette_brute(sub.data, labels)
        for rid, want in zip(sub.region_ids, expected):
            assert report.per_region[rid].score == pytest.approx(want, abs=1e-12)

    def test_unknown_sample_id(self):
        feats = synth.random_features(6, 2)
        model = clustering.kmeans(feats, 2, seed=0)
        with pytest.raises(KeyError):
            clustering.silhouette_scores(feats, model, sample=["s:0:0", "nope"])


class TestSelectK:
    def test_bounds(self):
        feats = synth.random_features(10, 2)
        with pytest.raises(InvalidK):
            clustering.select_k(feats, 1, 4, seed=0)
        with pytest.raises(InvalidK):
            clustering.select_k(feats, 4, 3, seed=0)
        with pytest.raises(InvalidK):
            clustering.select_k(feats, 2, 10, seed=0)

    def test_recovers_planted_count(self):
        feats = synth.blob_features(4, per=20, seed=0)
        best, sweep = clustering.select_k(feats, 2, 7, seed=0, restarts=3)
        assert best == 4
        assert [k for k, _, _ in sweep] == [2, 3, 4, 5, 6, 7]
        best_row = max(sweep, key=lambda row: row[1])
        assert best_row[0] == 4

    def test_ties_go_to_the_smaller_k(self, monkeypatch):
        feats = synth.random_features(20, 2, seed=1)

        def flat(features, model, sample=None, seed=0):
            return clustering.SilhouetteReport(per_region={}, mean_score=0.5, sample_ids=())

        monkeypatch.setattr(clustering, "silhouette_scores", flat)
        best, sweep = clustering.select_k(feats, 2, 5, seed=0, restarts=2)
        assert best == 2
        assert {row[1] for row in sweep} == {0.5}


class TestRepresentatives:
    def test_matches_exhaustive_scan(self):
        for trial in range(4):
            feats = synth.random_features(35, 3, seed=trial + 10)
            model = clustering.kmeans(feats, 4, seed=trial)
            reps = clustering.representatives(feats, model)
            expected = oracles.nearest_scan(
                feats.data, feats.region_ids, model.assignments, model.centroids
            )
            assert reps.per_cluster == expected

    def test_tie_breaks_to_the_smallest_id(self):
        feats = FeatureMatrix(("s:b:0", "s:a:0"), np.array([[0.0, 0.0], [2.0, 0.0]]))
        model = clustering.ClusterModel(
            centroids=np.array([[1.0, 0.0]]),
            assignments={"s:b:0": 0, "s:a:0": 0},
            k=1,
            objective=2.0,
            iterations=1,
            seed=0,
        )
        reps = clustering.representatives(feats, model)
        assert reps.per_cluster == {0: "s:a:0"}

    def test_empty_cluster_rejected(self):
        feats = synth.random_features(4, 2)
        model = clustering.ClusterModel(
            centroids=np.zeros((2, 2)),
            assignments={rid: 0 for rid in feats.region_ids},
            k=2,
            objective=0.0,
            iterations=1,
            seed=0,
        )
        with pytest.raises(EmptyCluster):
            clustering.representatives(feats, model)


class TestPersistence:
    def test_model_round_trip(self, tmp_path):
        feats = synth.random_features(15, 3, seed=4)
        model = clustering.kmeans(feats, 3, seed=5)
        path = tmp_path / "m.json"
        clustering.save_model(path, model)
        back = clustering.load_model(path)
        assert back.k == model.k
        assert back.seed == model.seed
        assert back.objective == model.objective
        assert back.iterations == model.iterations
        assert back.j_history == model.j_history
        assert back.assignments == model.assignments
        assert np.array_equal(back.centroids, model.centroids)

    def test_silhouette_round_trip(self, tmp_path):
        feats = synth.random_features(10, 2, seed=7)
        model = clustering.kmeans(feats, 2, seed=7)
        report = clustering.silhouette_scores(feats, model)
        path = tmp_path / "s.json"
        clustering.save_silhouette(path, report)
        back = clustering.load_silhouette(path)
        assert back.mean_score == report.mean_score
        assert back.sample_ids == report.sample_ids
        assert back.per_region == report.per_region

    def test_representatives_round_trip(self, tmp_path):
        reps = clustering.RepresentativeSet(per_cluster={0: "s:2:0", 1: "s:0:0"})
        path = tmp_path / "r.json"
        clustering.save_representatives(path, reps)
        assert clustering.load_representatives(path).per_cluster == reps.per_cluster

    def test_sweep_table(self, tmp_path):
        path = tmp_path / "sweep.csv"
        clustering.write_sweep(path, [(2, 0.5, 30.0), (3, 0.625, 20.0)])
        assert path.read_text() == "k,mean_score\n2,0.5\n3,0.625\n"
