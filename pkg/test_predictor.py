#!/usr/bin/env python3
"""
Tests for the random-forest, decision-tree and k-NN predictors and model files
"""

import os
import sys
import json
import tempfile

import numpy as np

# Add the current directory to Python path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from models.dataset import AugmentedRecord, SyntheticSpaceSpec
from models.encoding import EncodingScheme, SchemeKind
from models.graph import ArchGraph, PermutationMatrix
from models.predictor import ModelKind, TrainConfig
from services.predictor_service import PredictorService
from services.regression_models import DecisionTreeRegressor, RandomForestRegressor, bootstrap_indices, tree_seeds
from utils.dependencies import get_services
from utils.errors import EmptyTrainError, ParseError, RangeError, VersionError, WidthMismatchError
from utils.settings import Settings

services = get_services(Settings())
predictors = services.predictor

SPEC = SyntheticSpaceSpec(
    n_intermediate=3,
    vocab=["conv1x1", "conv3x3", "maxpool"],
    edge_density=0.5,
    score_weights=[0.4, -0.3, 0.2, 0.1, 0.3, -0.2],
    seed=5,
)
DATASET = services.dataset.generate_synthetic(SPEC, 30)
SCHEME = EncodingScheme(max_vertices=DATASET.max_vertices, vocab=DATASET.vocab)
AUGMENTED = services.augmentation.augment_dataset(DATASET, SCHEME)


def fit(kind, **overrides):
    config = TrainConfig(model_kind=kind, rf_trees=20, **overrides)
    return predictors.fit(AUGMENTED, SCHEME, config)


def expect(error, fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except error as e:
        return e
    assert False, f"{fn.__name__} should raise {error.__name__}"


def test_constant_target():
    records = [AugmentedRecord(encoding=r.encoding, performance=0.7, source_id=r.source_id) for r in AUGMENTED.records]
    for kind in ModelKind:
        predictor = predictors.fit(records, SCHEME, TrainConfig(model_kind=kind, rf_trees=5))
        assert np.allclose(predictors.predict(predictor, AUGMENTED.features()), 0.7, atol=1e-12)


def test_decision_tree_fits_training_set():
    predictor = fit(ModelKind.DT)
    errors = predictors.predict(predictor, AUGMENTED.features()) - AUGMENTED.targets()
    assert float(np.mean(errors ** 2)) == 0.0

    shallow = fit(ModelKind.DT, dt_max_depth=1)
    assert shallow.model.node_count <= 3


def test_threshold_bracket():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    tree = DecisionTreeRegressor().fit(X, np.array([0.0, 0.0, 1.0, 1.0]))
    assert tree.feature[0] == 0 and tree.threshold[0] == 1.5
    assert tree.predict(np.array([[1.4], [1.6]])).tolist() == [0.0, 1.0]

    # constant features never split
    constant = DecisionTreeRegressor().fit(np.ones((4, 2)), np.array([0.0, 1.0, 0.0, 1.0]))
    assert constant.node_count == 1 and constant.predict(np.ones((1, 2)))[0] == 0.5


def test_knn_with_one_neighbour_recalls_training_targets():
    predictor = fit(ModelKind.KNN, knn_k=1)
    assert (predictors.predict(predictor, AUGMENTED.features()) == AUGMENTED.targets()).all()

    everyone = fit(ModelKind.KNN, knn_k=10_000)
    assert np.allclose(predictors.predict(everyone, AUGMENTED.features()[:3]), AUGMENTED.targets().mean())


def test_forest_is_deterministic():
    first = predictors.predict(fit(ModelKind.RF, seed=3), AUGMENTED.features())
    second = predictors.predict(fit(ModelKind.RF, seed=3), AUGMENTED.features())
    threaded = PredictorService(services.encoding, services.augmentation, threads=4)
    third = threaded.predict(threaded.fit(AUGMENTED, SCHEME, TrainConfig(rf_trees=20, seed=3)), AUGMENTED.features())
    assert (first == second).all() and (first == third).all()

    other = predictors.predict(fit(ModelKind.RF, seed=4), AUGMENTED.features())
    assert not (first == other).all()


def test_forest_prediction_is_tree_mean():
    predictor = fit(ModelKind.RF)
    X = AUGMENTED.features()
    per_tree = predictor.model.tree_predictions(X)
    assert per_tree.shape == (20, len(X))
    assert np.allclose(predictors.predict(predictor, X), per_tree.mean(axis=0), rtol=0, atol=1e-15)


def test_single_tree_forest_is_bootstrap_tree():
    X, y = AUGMENTED.features(), AUGMENTED.targets()
    forest = RandomForestRegressor(n_trees=1, feature_fraction=1.0, seed=9).fit(X, y)
    rows = bootstrap_indices(np.random.default_rng(tree_seeds(9, 1)[0]), len(y))
    tree = DecisionTreeRegressor().fit(X[rows], y[rows])
    assert (forest.predict(X) == tree.predict(X)).all()


def test_max_features():
    assert RandomForestRegressor().max_features(55) == 8
    assert RandomForestRegressor(feature_fraction=0.5).max_features(55) == 28
    assert RandomForestRegressor(feature_fraction=1.0).max_features(55) == 55


def test_fit_and_predict_errors():
    expect(EmptyTrainError, predictors.fit, [], SCHEME, TrainConfig())
    narrow = SCHEME.with_kind(SchemeKind.RENAS_BASELINE)
    expect(WidthMismatchError, predictors.fit, AUGMENTED, narrow, TrainConfig(rf_trees=2))

    predictor = fit(ModelKind.DT)
    assert predictors.predict(predictor, []).shape == (0,)
    expect(WidthMismatchError, predictors.predict, predictor, np.zeros((2, SCHEME.width + 1)))
    expect(RangeError, predictors.predict_architecture, predictor, DATASET.records[0].graph, "median")


def test_single_and_mean_agree_on_three_vertices():
    chain = ArchGraph(n=3, edges=[(0, 1), (1, 2)], ops=("input", "conv3x3", "output"), input_idx=0, output_idx=2)
    predictor = fit(ModelKind.RF)
    single = predictors.predict_architecture(predictor, chain, "single")
    mean = predictors.predict_architecture(predictor, chain, "aug_mean")
    assert single == mean


def test_mean_prediction_ignores_labeling():
    rng = np.random.default_rng(1)
    graphs = services.graph
    predictor = fit(ModelKind.RF)
    for i in range(50):
        graph = DATASET.records[i % len(DATASET.records)].graph
        adj, attrs = graphs.to_matrices(graph, graphs.topological_labeling(graph, 0))
        labeling = [0] + [int(v) for v in rng.permutation(np.arange(1, graph.n - 1))] + [graph.n - 1]
        relabeled = graphs.from_matrices(*graphs.apply_permutation(adj, attrs, PermutationMatrix.from_labeling(labeling)))
        a = predictors.predict_architecture(predictor, graph, "aug_mean", seed=0)
        b = predictors.predict_architecture(predictor, relabeled, "aug_mean", seed=17)
        assert a == b


def renumber(graph, mapping):
    """Same architecture with vertex v renamed mapping[v]"""
    ops = [None] * graph.n
    for v, op in enumerate(graph.ops):
        ops[mapping[v]] = op
    return ArchGraph(
        n=graph.n,
        edges=[(mapping[u], mapping[v]) for u, v in graph.edges],
        ops=tuple(ops),
        input_idx=mapping[graph.input_idx],
        output_idx=mapping[graph.output_idx],
    )


def test_single_prediction_ignores_vertex_numbering():
    spec = SyntheticSpaceSpec(
        n_intermediate=5,
        vocab=["conv1x1", "conv3x3", "maxpool"],
        edge_density=0.5,
        score_weights=[0.4, -0.3, 0.2, 0.1, 0.3, -0.2],
        seed=12,
    )
    dataset = services.dataset.generate_synthetic(spec, 20)
    scheme = EncodingScheme(max_vertices=dataset.max_vertices, vocab=dataset.vocab)
    predictor = predictors.fit(
        services.augmentation.augment_dataset(dataset, scheme, cap=6), scheme, TrainConfig(rf_trees=10)
    )
    rng = np.random.default_rng(3)
    for record in dataset.records:
        graph = record.graph
        copy = renumber(graph, [int(v) for v in rng.permutation(graph.n)])
        assert services.graph.is_isomorphic(graph, copy)
        assert (services.encoding.encode_canonical(copy, scheme) == services.encoding.encode_canonical(graph, scheme)).all()
        assert predictors.predict_architecture(predictor, copy, "single") == predictors.predict_architecture(predictor, graph, "single")


def test_save_and_load_reproduce_predictions():
    X = AUGMENTED.features()
    with tempfile.TemporaryDirectory() as tmp:
        for kind in ModelKind:
            predictor = fit(kind, seed=2)
            path = os.path.join(tmp, f"{kind.value}.json")
            predictors.save(predictor, path)
            loaded = predictors.load(path, expected_scheme=SCHEME)
            assert loaded.kind == kind
            assert loaded.train_meta == {"samples": len(AUGMENTED), "seed": 2, "width": SCHEME.width}
            assert (predictors.predict(loaded, X) == predictors.predict(predictor, X)).all()


def test_same_seed_writes_identical_model_file():
    with tempfile.TemporaryDirectory() as tmp:
        first, second = os.path.join(tmp, "a.json"), os.path.join(tmp, "b.json")
        predictors.save(fit(ModelKind.RF, seed=6), first)
        predictors.save(fit(ModelKind.RF, seed=6), second)
        with open(first, "rb") as a, open(second, "rb") as b:
            assert a.read() == b.read()


def test_load_errors():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.json")
        predictors.save(fit(ModelKind.DT), path)
        with open(path) as f:
            good = json.load(f)

        expect(VersionError, predictors.load, path, expected_scheme=SCHEME.with_kind(SchemeKind.RENAS_BASELINE))

        for name, changes in (("fingerprint", {"scheme_fingerprint": "0" * 64}), ("version", {"version": 2})):
            bad = os.path.join(tmp, f"{name}.json")
            with open(bad, "w") as f:
                json.dump(dict(good, **changes), f)
            expect(VersionError, predictors.load, bad)

        truncated = os.path.join(tmp, "truncated.json")
        with open(path) as src, open(truncated, "w") as dst:
            dst.write(src.read()[:200])
        expect(ParseError, predictors.load, truncated)

        expect(FileNotFoundError, predictors.load, os.path.join(tmp, "missing.json"))


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_") and callable(v)]
    for test in tests:
        test()
        print(f"✅ {test.__name__}")
    print(f"🎉 {len(tests)} predictor tests passed")
