import logging

import numpy as np
import pytest

from pmm_knn.core.aggregation import ExponentVector, power_muirhead_mean
from pmm_knn.core.classifier import (
    ClassifierConfig,
    GaussianNbModel,
    KnnModel,
    PmmKnnModel,
    gnb_fit_predict,
    knn_predict,
    pmm_knn_predict,
)
from pmm_knn.core.data import Dataset, euclidean_distance, fit_scaler
from pmm_knn.errors import DimensionalityError, ModelError, ParameterError


@pytest.fixture
def scaled_blobs(blobs):
    return fit_scaler(blobs).transform(blobs)


# --------- PMM-KNN ---------

def test_training_point_is_classified_as_its_own_class(toy):
    model = PmmKnnModel(k=1, r=1).fit(toy)
    for x, y in zip(toy.features, toy.labels):
        assert pmm_knn_predict(model, x).label == y


def test_separated_clusters(scaled_blobs):
    model = PmmKnnModel(k=5, r=2).fit(scaled_blobs)
    assert model.predict(scaled_blobs.features).tolist() == scaled_blobs.labels.tolist()


def test_prediction_reports_one_distance_per_class(scaled_blobs):
    pred = PmmKnnModel(k=3).fit(scaled_blobs).predict_detailed(scaled_blobs.features[:2])
    assert len(pred) == 2
    assert all(len(p.centroid_distances) == 3 for p in pred)
    assert pred[0].label == int(np.argmin(pred[0].centroid_distances))


def test_vectorized_centroids_match_literal_neighborhood_aggregation(scaled_blobs, rng):
    queries = rng.uniform(size=(5, 2))
    for scope in ("vector", "per-dimension"):
        for r in (1, 2, 4):
            model = PmmKnnModel(k=4, r=r, support_scope=scope).fit(scaled_blobs)
            _, dists = model.predict_ranked(queries, model.rank_neighbors(queries))
            for i, q in enumerate(queries):
                for c in range(3):
                    hood = model.neighborhood(q, c)
                    centroid = hood.centroid(ExponentVector.ones_chain(r, 4), scope)
                    assert dists[i, c] == pytest.approx(euclidean_distance(q, centroid), rel=1e-9, abs=1e-12)


def test_neighborhood_uses_vector_supports(scaled_blobs):
    model = PmmKnnModel(k=3).fit(scaled_blobs)
    q = scaled_blobs.features[0]
    hood = model.neighborhood(q, 0)
    assert len(hood) == 3
    assert hood.indices[0] == 0
    assert np.all(np.diff(hood.distances) >= 0)
    column = hood.members[:, 0]
    expected = power_muirhead_mean(column, (1.0, 0.0, 0.0), hood.ctx)
    assert hood.centroid(ExponentVector((1, 0, 0)))[0] == pytest.approx(expected)


def test_general_exponents_match_ones_chain_path(scaled_blobs, rng):
    queries = rng.uniform(size=(4, 2))
    chain = PmmKnnModel(k=3, r=2).fit(scaled_blobs)
    general = PmmKnnModel(k=3, exponents=(1.0, 1.0 + 1e-12, 0.0)).fit(scaled_blobs)
    _, a = chain.predict_ranked(queries, chain.rank_neighbors(queries))
    _, b = general.predict_ranked(queries, general.rank_neighbors(queries))
    assert np.allclose(a, b, rtol=1e-8)


def test_ones_chain_exponents_are_recognised():
    model = PmmKnnModel(k=4, exponents=(1, 1, 1, 0))
    assert model.exponents is None
    assert model.r == 3


def test_k_larger_than_class_uses_whole_class(toy, caplog):
    with caplog.at_level(logging.WARNING):
        model = PmmKnnModel(k=10, r=1).fit(toy)
    assert "exceeds" in caplog.text
    assert model.predict(np.array([[0.0, 0.5], [5.0, 5.5]])).tolist() == [0, 1]


def test_r_is_clamped_to_neighborhood_size(toy):
    model = PmmKnnModel(k=5, r=5).fit(toy)
    _, dists = model.predict_ranked(toy.features, model.rank_neighbors(toy.features))
    assert np.all(np.isfinite(dists))


def test_rank_prefix_reuse(scaled_blobs, rng):
    queries = rng.uniform(size=(6, 2))
    deep = PmmKnnModel(k=9).fit(scaled_blobs)
    ranked = deep.rank_neighbors(queries, 9)
    shallow = PmmKnnModel(k=4, r=2).fit(scaled_blobs)
    expected, _ = shallow.predict_ranked(queries, shallow.rank_neighbors(queries))
    got, _ = deep.predict_ranked(queries, ranked, k=4, r=2)
    assert got.tolist() == expected.tolist()


def test_ties_break_on_training_order():
    train = Dataset(np.array([[1.0], [1.0], [3.0]]), np.array([0, 0, 0]), ("only",))
    model = PmmKnnModel(k=1).fit(train)
    assert model.neighborhood(np.array([1.0]), 0).indices.tolist() == [0]


def test_parameter_validation():
    with pytest.raises(ParameterError):
        PmmKnnModel(k=0)
    with pytest.raises(ParameterError):
        PmmKnnModel(k=3, r=4)
    with pytest.raises(ParameterError):
        PmmKnnModel(k=3, support_scope="sideways")


def test_general_exponents_shorter_than_k_are_rejected():
    with pytest.raises(ParameterError):
        PmmKnnModel(k=5, exponents=(2.0, 1.0))
    # ones-chain vectors only set r
    assert PmmKnnModel(k=5, exponents=(1.0, 1.0)).r == 2


def test_exponents_unusable_for_small_class_fail_at_fit():
    train = Dataset(
        np.array([[0.0], [0.1], [0.2], [0.9], [1.0]]),
        np.array([0, 0, 0, 1, 1]),
        ("big", "small"),
    )
    model = PmmKnnModel(k=3, exponents=(0.0, 0.0, 1.0))
    with pytest.raises(ModelError, match="small"):
        model.fit(train)
    with pytest.raises(ModelError):
        model.predict(np.array([[0.2]]))


def test_two_class_local_centroid_example():
    train = Dataset(
        np.array([[0.0, 0.0], [0.2, 0.0], [1.0, 1.0], [0.8, 1.0]]),
        np.array([0, 0, 1, 1]),
        ("A", "B"),
    )
    pred = pmm_knn_predict(PmmKnnModel(k=2, r=1).fit(train), np.array([0.1, 0.1]))
    assert pred.label == 0
    assert pred.centroid_distances[0] < pred.centroid_distances[1]


def test_empty_class_is_a_model_error():
    train = Dataset(np.array([[0.0], [1.0]]), np.array([0, 0]), ("a", "b"))
    with pytest.raises(ModelError):
        PmmKnnModel().fit(train)
    with pytest.raises(ModelError):
        GaussianNbModel().fit(train)


def test_unfitted_and_mismatched_queries(toy):
    with pytest.raises(ModelError):
        PmmKnnModel().predict(np.zeros((1, 2)))
    model = PmmKnnModel(k=1).fit(toy)
    with pytest.raises(DimensionalityError):
        model.predict(np.zeros((1, 3)))


# --------- Baselines ---------

def test_knn_majority_vote(toy):
    assert knn_predict(toy, np.array([0.2, 0.2]), 1) == 0
    assert knn_predict(toy, np.array([4.0, 4.0]), 3) == 1
    with pytest.raises(ParameterError):
        knn_predict(toy, np.array([0.0, 0.0]), 5)


def test_knn_vote_ties_go_to_lowest_label(toy):
    assert KnnModel(k=4).fit(toy).predict(np.array([[2.5, 3.0]])).tolist() == [0]


def test_gnb_separates_clusters(scaled_blobs):
    model = GaussianNbModel().fit(scaled_blobs)
    assert (model.predict(scaled_blobs.features) == scaled_blobs.labels).mean() == 1.0
    assert gnb_fit_predict(scaled_blobs, scaled_blobs.features[13]) == 1


def test_gnb_one_dimensional_example():
    train = Dataset(np.array([[0.0], [0.1], [1.0], [1.1]]), np.array([0, 0, 1, 1]), ("A", "B"))
    assert gnb_fit_predict(train, np.array([0.05])) == 0


def test_gnb_identical_class_statistics_go_to_lowest_label():
    train = Dataset(np.array([[0.0], [1.0], [0.0], [1.0]]), np.array([0, 0, 1, 1]), ("a", "b"))
    model = GaussianNbModel().fit(train)
    assert model.predict(np.array([[0.5], [3.0], [-2.0]])).tolist() == [0, 0, 0]


def test_gnb_variance_floor_handles_constant_features():
    train = Dataset(np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 5.0], [1.0, 6.0]]), np.array([0, 0, 1, 1]), ("a", "b"))
    posteriors = GaussianNbModel().fit(train).log_posteriors(np.array([[1.0, 5.5]]))
    assert np.all(np.isfinite(posteriors))
    assert int(np.argmax(posteriors)) == 1


# --------- Configuration ---------

def test_classifier_config_builds_models():
    assert isinstance(ClassifierConfig("pmm-knn", k=3, r=2).build(), PmmKnnModel)
    assert isinstance(ClassifierConfig("knn", k=3).build(), KnnModel)
    assert isinstance(ClassifierConfig("gnb").build(), GaussianNbModel)
    with pytest.raises(ParameterError):
        ClassifierConfig("svm")


def test_classifier_config_echo_drops_unused_keys():
    assert ClassifierConfig("gnb").to_dict() == {"kind": "gnb"}
    assert ClassifierConfig("knn", k=7).to_dict() == {"kind": "knn", "k": 7}
    assert ClassifierConfig("pmm-knn", k=5, r=2).to_dict() == {
        "kind": "pmm-knn", "k": 5, "r": 2, "exponents": None, "support_scope": "vector",
    }
