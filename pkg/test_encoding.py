#!/usr/bin/env python3
"""
Tests for the one-hot OON encoding, the baseline type-matrix encoding and OOE conversion
"""

import os
import sys

import numpy as np

# Add the current directory to Python path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from models.dataset import AnnotatedDataset, DatasetRecord, SyntheticSpaceSpec
from models.encoding import EncodingScheme, SchemeKind
from models.graph import AdjacencyMatrix, ArchGraph, AttributeVector, OoeGraph, OpVocabulary, PermutationMatrix
from utils.dependencies import get_services
from utils.errors import CapacityError, ConfigError, VocabularyError
from utils.settings import Settings

services = get_services(Settings())
graphs = services.graph
encoder = services.encoding

CHAIN_ADJ = AdjacencyMatrix(entries=((0, 1, 0), (0, 0, 1), (0, 0, 0)))
CHAIN_OPS = AttributeVector(values=("input", "conv3x3", "output"))
SMALL_VOCAB = OpVocabulary.from_ops(["conv3x3"])


def nb201_cell():
    edges = [(0, 1, "conv3x3"), (0, 2, "skip"), (1, 2, "conv1x1"), (0, 3, "avgpool"), (1, 3, "skip"), (2, 3, "conv3x3")]
    return OoeGraph(n=4, op_edges=tuple(edges), input_idx=0, output_idx=3)


def ooe_op_paths(cell):
    paths = []

    def walk(node, trail):
        if node == cell.output_idx:
            paths.append(trail)
            return
        for u, v, op in cell.op_edges:
            if u == node:
                walk(v, trail + (op,))

    walk(cell.input_idx, ())
    return sorted(paths)


def test_vocabulary_order():
    vocab = OpVocabulary.from_ops(["maxpool", "conv3x3", "conv3x3", "input"])
    assert vocab.tokens == ("input", "output", "conv3x3", "maxpool", "null")
    assert vocab.token("maxpool").id == 3
    try:
        vocab.token("avgpool")
        assert False, "unknown op should raise"
    except VocabularyError:
        pass


def test_encode_oon_chain():
    scheme = EncodingScheme(kind=SchemeKind.GIAUG_OON, max_vertices=3, vocab=SMALL_VOCAB)
    encoding = encoder.encode_oon(CHAIN_ADJ, CHAIN_OPS, scheme)
    assert scheme.width == 9 + 12
    assert encoding.tolist() == [0, 1, 0, 0, 0, 1, 0, 0, 0] + [1, 0, 0, 0] + [0, 0, 1, 0] + [0, 1, 0, 0]


def test_encode_oon_padding():
    scheme = EncodingScheme(kind=SchemeKind.GIAUG_OON, max_vertices=4, vocab=SMALL_VOCAB)
    encoding = encoder.encode_oon(CHAIN_ADJ, CHAIN_OPS, scheme)
    assert len(encoding) == 16 + 16
    adj = encoding[:16].reshape(4, 4)
    assert (adj[3] == 0).all() and (adj[:, 3] == 0).all()
    assert encoding[16:].reshape(4, 4)[3].tolist() == [0, 0, 0, 1]
    assert (encoding[16:].reshape(4, 4).sum(axis=1) == 1).all()


def test_encode_oon_errors():
    scheme = EncodingScheme(kind=SchemeKind.GIAUG_OON, max_vertices=2, vocab=SMALL_VOCAB)
    try:
        encoder.encode_oon(CHAIN_ADJ, CHAIN_OPS, scheme)
        assert False, "3 vertices do not fit 2"
    except CapacityError:
        pass

    scheme = EncodingScheme(kind=SchemeKind.GIAUG_OON, max_vertices=3, vocab=OpVocabulary.from_ops(["maxpool"]))
    try:
        encoder.encode_oon(CHAIN_ADJ, CHAIN_OPS, scheme)
        assert False, "conv3x3 is not in the vocabulary"
    except VocabularyError:
        pass

    try:
        encoder.encode_oon(CHAIN_ADJ, CHAIN_OPS, scheme.with_kind(SchemeKind.RENAS_BASELINE))
        assert False, "wrong scheme kind"
    except ConfigError:
        pass


def test_encode_oon_injective_and_decodable():
    rng = np.random.default_rng(0)
    spec = SyntheticSpaceSpec(n_intermediate=4, vocab=["a", "b", "c"], edge_density=0.5, score_weights=[0.1] * 6, seed=3)
    dataset = services.dataset.generate_synthetic(spec, 60)
    scheme = EncodingScheme(max_vertices=8, vocab=dataset.vocab)

    labeled = []
    for record in dataset.records:
        for seed in range(4):
            labeled.append(graphs.to_matrices(record.graph, graphs.topological_labeling(record.graph, seed)))
    encodings = [encoder.encode(a, m, scheme) for a, m in labeled]

    for _ in range(1000):
        i, j = rng.integers(len(labeled), size=2)
        same_matrices = labeled[i] == labeled[j]
        same_encoding = bool((encodings[i] == encodings[j]).all())
        assert same_matrices == same_encoding

    for (a, m), encoding in zip(labeled, encodings):
        assert encoder.decode_oon(encoding, scheme) == (a, m)
        assert len(encoding) == scheme.width


def test_encode_renas():
    scheme = EncodingScheme(kind=SchemeKind.RENAS_BASELINE, max_vertices=3, vocab=SMALL_VOCAB)
    assert scheme.width == 9
    assert encoder.encode_renas(CHAIN_ADJ, CHAIN_OPS, scheme).tolist() == [0, 2, 0, 0, 0, 1, 0, 0, 0]

    empty = AdjacencyMatrix(entries=((0, 0, 0), (0, 0, 0), (0, 0, 0)))
    assert not encoder.encode_renas(empty, CHAIN_OPS, scheme).any()

    try:
        encoder.encode_renas(CHAIN_ADJ, CHAIN_OPS, scheme.with_kind(SchemeKind.GIAUG_OON))
        assert False, "wrong scheme kind"
    except ConfigError:
        pass


def test_encode_renas_distinguishes_asymmetric_labelings():
    graph = ArchGraph(
        n=5,
        edges=[(0, 1), (1, 2), (2, 4), (0, 3), (3, 4)],
        ops=("input", "conv3x3", "maxpool", "conv1x1", "output"),
        input_idx=0,
        output_idx=4,
    )
    scheme = EncodingScheme(kind=SchemeKind.RENAS_BASELINE, max_vertices=5, vocab=OpVocabulary.from_ops(graph.ops))
    adj, attrs = graphs.to_matrices(graph, [0, 1, 2, 3, 4])
    identity = encoder.encode(adj, attrs, scheme)
    swapped = encoder.encode(*graphs.apply_permutation(adj, attrs, PermutationMatrix.from_labeling([0, 2, 1, 3, 4])), scheme)
    assert not (identity == swapped).all()

    encodings = {
        encoder.encode(*graphs.apply_permutation(adj, attrs, PermutationMatrix.from_labeling(labeling)), scheme).tobytes()
        for labeling in services.augmentation.enumerate_labelings(5, 0, 4)
    }
    assert len(encodings) == 6


def test_encode_batch_matches_single():
    spec = SyntheticSpaceSpec(n_intermediate=3, vocab=["a", "b"], edge_density=0.6, score_weights=[0.1] * 5, seed=1)
    dataset = services.dataset.generate_synthetic(spec, 10)
    for kind in SchemeKind:
        scheme = EncodingScheme(kind=kind, max_vertices=7, vocab=dataset.vocab)
        for record in dataset.records:
            batch = services.augmentation.candidate_matrix(record.graph, scheme, cap=None, seed=2)
            order = graphs.topological_labeling(record.graph, 2)
            adj, ops = graphs.to_arrays(record.graph, order)
            for row, labeling in zip(batch, services.augmentation.enumerate_labelings(record.graph.n, 0, record.graph.n - 1)):
                relabeled_adj, relabeled_ops = graphs.relabel(adj, ops, labeling)
                assert (row == encoder.encode_arrays(relabeled_adj, relabeled_ops, scheme)).all()


def test_scheme_descriptor_and_fingerprint():
    scheme = EncodingScheme(kind=SchemeKind.GIAUG_OON, max_vertices=7, vocab=SMALL_VOCAB)
    restored = EncodingScheme.from_descriptor(scheme.to_descriptor())
    assert restored == scheme
    assert restored.fingerprint() == scheme.fingerprint()
    assert scheme.with_kind(SchemeKind.RENAS_BASELINE).fingerprint() != scheme.fingerprint()
    assert EncodingScheme(max_vertices=8, vocab=SMALL_VOCAB).fingerprint() != scheme.fingerprint()


def test_ooe_single_edge():
    cell = OoeGraph(n=2, op_edges=((0, 1, "conv3x3"),), input_idx=0, output_idx=1)
    graph = encoder.ooe_to_oon(cell)
    assert graph.n == 3
    assert graph.edges == ((0, 1), (1, 2))
    assert graph.ops == ("input", "conv3x3", "output")


def test_ooe_nb201_cell():
    cell = nb201_cell()
    graph = encoder.ooe_to_oon(cell)
    assert graph.n == 8
    assert graphs.validate(graph).ok
    assert sorted(graph.ops[1:-1]) == sorted(op for _, _, op in cell.op_edges)
    # op vertex x feeds op vertex y iff head(x) == tail(y)
    for x, (_, head, _) in enumerate(cell.op_edges, start=1):
        for y, (tail, _, _) in enumerate(cell.op_edges, start=1):
            assert ((x, y) in graph.edges) == (head == tail)
    assert graphs.op_paths(graph) == ooe_op_paths(cell)


def test_ooe_parallel_edges_collapse_under_dedup():
    cell = OoeGraph(n=2, op_edges=((0, 1, "conv3x3"), (0, 1, "conv3x3")), input_idx=0, output_idx=1)
    graph = encoder.ooe_to_oon(cell)
    assert graph.n == 4
    assert graph.predecessors()[1] == graph.predecessors()[2] == [0]
    assert graph.successors()[1] == graph.successors()[2] == [3]
    assert graphs.op_paths(graph) == ooe_op_paths(cell)

    dataset = AnnotatedDataset(
        records=(DatasetRecord(id="par", graph=graph, performance=0.4),),
        vocab=OpVocabulary.from_ops(graph.ops),
        max_vertices=4,
    )
    augmented = services.augmentation.augment_dataset(dataset, EncodingScheme(max_vertices=4, vocab=dataset.vocab))
    assert augmented.stats.candidates == 2
    assert augmented.stats.unique == 1


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_") and callable(v)]
    for test in tests:
        test()
        print(f"✅ {test.__name__}")
    print(f"🎉 {len(tests)} encoding tests passed")
