#!/usr/bin/env python3
"""
Tests for graph validation, labeling, matrices and the brute-force isomorphism test
"""

import os
import sys

import numpy as np

# Add the current directory to Python path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from models.dataset import SyntheticSpaceSpec
from models.graph import AdjacencyMatrix, ArchGraph, AttributeVector, PermutationMatrix, Violation
from services.graph_service import GraphService
from utils.dependencies import get_services
from utils.errors import DimensionError, GraphValidationError, SizeError
from utils.settings import Settings

services = get_services(Settings())
graphs = services.graph

VOCAB = ["conv1x1", "conv3x3", "maxpool"]


def chain(*ops):
    names = ("input",) + ops + ("output",)
    n = len(names)
    return ArchGraph(n=n, edges=[(i, i + 1) for i in range(n - 1)], ops=names, input_idx=0, output_idx=n - 1)


def diamond():
    return ArchGraph(
        n=4,
        edges=[(0, 1), (0, 2), (1, 3), (2, 3)],
        ops=("input", "conv3x3", "maxpool", "output"),
        input_idx=0,
        output_idx=3,
    )


def random_graphs(n_intermediate, count, seed):
    spec = SyntheticSpaceSpec(
        n_intermediate=n_intermediate,
        vocab=VOCAB,
        edge_density=0.5,
        score_weights=[0.1] * (len(VOCAB) + 3),
        seed=seed,
    )
    return [r.graph for r in services.dataset.generate_synthetic(spec, count).records]


def random_relabeling(graph, rng):
    """Matrices of `graph` and of a random input/output-fixing relabeling of them"""
    order = graphs.topological_labeling(graph, seed=0)
    adj, attrs = graphs.to_matrices(graph, order)
    middle = list(rng.permutation(np.arange(1, graph.n - 1)))
    labeling = [0] + [int(v) for v in middle] + [graph.n - 1]
    return adj, attrs, labeling


def test_validate_examples():
    """Minimal chain passes, two-vertex cycle and isolated vertex fail"""
    assert graphs.validate(chain("conv3x3")).ok

    cycle = ArchGraph(n=2, edges=[(0, 1), (1, 0)], ops=("input", "output"), input_idx=0, output_idx=1)
    report = graphs.validate(cycle)
    assert not report.ok and report.violation == Violation.CYCLE

    isolated = ArchGraph(
        n=4,
        edges=[(0, 1), (1, 2)],
        ops=("input", "conv3x3", "output", "conv3x3"),
        input_idx=0,
        output_idx=2,
    )
    report = graphs.validate(isolated)
    assert not report.ok and report.violation == Violation.UNREACHABLE


def test_validate_reports_first_violation():
    self_loop = ArchGraph(n=3, edges=[(0, 1), (1, 1), (1, 2)], ops=("input", "conv3x3", "output"), input_idx=0, output_idx=2)
    assert graphs.validate(self_loop).violation == Violation.CYCLE

    into_input = ArchGraph(n=3, edges=[(0, 1), (1, 2), (1, 0)], ops=("input", "conv3x3", "output"), input_idx=0, output_idx=2)
    assert graphs.validate(into_input).violation == Violation.CYCLE

    wrong_tokens = ArchGraph(n=3, edges=[(0, 1), (1, 2)], ops=("conv3x3", "input", "output"), input_idx=0, output_idx=2)
    assert graphs.validate(wrong_tokens).violation == Violation.IO_TOKENS

    try:
        graphs.check(wrong_tokens, "rec-7")
        assert False, "check should raise"
    except GraphValidationError as e:
        assert e.record_id == "rec-7"
        assert "rec-7" in str(e)


def test_topological_labeling():
    for seed in range(5):
        assert graphs.topological_labeling(chain("a", "b"), seed) == [0, 1, 2, 3]

    seen = set()
    for seed in range(20):
        order = graphs.topological_labeling(diamond(), seed)
        assert order in ([0, 1, 2, 3], [0, 2, 1, 3])
        assert order == graphs.topological_labeling(diamond(), seed)
        seen.add(tuple(order))
    assert len(seen) == 2

    for graph in random_graphs(5, 30, seed=3):
        order = graphs.topological_labeling(graph, seed=11)
        position = {v: i for i, v in enumerate(order)}
        assert order[0] == graph.input_idx and order[-1] == graph.output_idx
        assert all(position[u] < position[v] for u, v in graph.edges)


def test_to_matrices_chain():
    graph = chain("conv3x3")
    adj, attrs = graphs.to_matrices(graph, [0, 1, 2])
    assert adj.entries == ((0, 1, 0), (0, 0, 1), (0, 0, 0))
    assert attrs.values == ("input", "conv3x3", "output")

    adj, _ = graphs.to_matrices(graph, [2, 1, 0])
    assert adj.entries == ((0, 0, 0), (1, 0, 0), (0, 1, 0))

    try:
        graphs.to_matrices(graph, [0, 1])
        assert False, "short order should raise"
    except DimensionError:
        pass


def test_from_matrices_round_trip():
    for graph in random_graphs(4, 40, seed=5) + random_graphs(5, 40, seed=6):
        adj, attrs = graphs.to_matrices(graph, graphs.topological_labeling(graph, seed=1))
        rebuilt = graphs.from_matrices(adj, attrs)
        again_adj, again_attrs = graphs.to_matrices(rebuilt, list(range(rebuilt.n)))
        assert again_adj == adj and again_attrs == attrs
        assert graphs.is_isomorphic(graph, rebuilt)

    diagonal = AdjacencyMatrix(entries=((0, 1, 0), (0, 1, 1), (0, 0, 0)))
    try:
        graphs.from_matrices(diagonal, AttributeVector(values=("input", "conv3x3", "output")))
        assert False, "self-loop should be rejected"
    except GraphValidationError as e:
        assert e.violation == Violation.CYCLE.value


def test_apply_permutation_identity_and_inverse():
    rng = np.random.default_rng(0)
    for graph in random_graphs(5, 20, seed=8):
        adj, attrs, labeling = random_relabeling(graph, rng)
        same = graphs.apply_permutation(adj, attrs, PermutationMatrix.identity(graph.n))
        assert same == (adj, attrs)

        p = PermutationMatrix.from_labeling(labeling)
        assert (p.array() @ p.array().T == np.eye(graph.n, dtype=np.int64)).all()
        moved = graphs.apply_permutation(adj, attrs, p)
        back = graphs.apply_permutation(moved[0], moved[1], p.inverse())
        assert back == (adj, attrs)


def test_apply_permutation_matches_index_oracle():
    rng = np.random.default_rng(1)
    for graph in [diamond()] + random_graphs(4, 20, seed=9):
        adj, attrs, labeling = random_relabeling(graph, rng)
        new_adj, new_attrs = graphs.apply_permutation(adj, attrs, PermutationMatrix.from_labeling(labeling))
        sigma = np.argsort(labeling)
        a, b = adj.array(), new_adj.array()
        for i in range(graph.n):
            assert new_attrs.values[sigma[i]] == attrs.values[i]
            for j in range(graph.n):
                assert b[sigma[i], sigma[j]] == a[i, j]

    # swapping the two middle vertices of the diamond
    adj, attrs = graphs.to_matrices(diamond(), [0, 1, 2, 3])
    swapped, swapped_attrs = graphs.apply_permutation(adj, attrs, PermutationMatrix.from_labeling([0, 2, 1, 3]))
    assert swapped == adj
    assert swapped_attrs.values == ("input", "maxpool", "conv3x3", "output")


def test_is_isomorphic():
    rng = np.random.default_rng(2)
    samples = random_graphs(5, 50, seed=10) + random_graphs(4, 50, seed=11)
    for graph in samples:
        assert graphs.is_isomorphic(graph, graph)
        adj, attrs, labeling = random_relabeling(graph, rng)
        relabeled = graphs.from_matrices(*graphs.apply_permutation(adj, attrs, PermutationMatrix.from_labeling(labeling)))
        assert graphs.is_isomorphic(graph, relabeled)

    assert not graphs.is_isomorphic(chain("conv3x3", "maxpool"), chain("conv3x3", "conv3x3"))
    assert not graphs.is_isomorphic(chain("conv3x3", "maxpool"), chain("maxpool", "conv3x3"))
    assert not graphs.is_isomorphic(chain("conv3x3"), chain("conv3x3", "conv3x3"))


def test_is_isomorphic_size_limit():
    small = GraphService(brute_force_limit=4)
    graph = chain("a", "b", "c")
    try:
        small.is_isomorphic(graph, graph)
        assert False, "5 vertices should exceed a limit of 4"
    except SizeError:
        pass


def test_canonical_key():
    rng = np.random.default_rng(3)
    samples = random_graphs(4, 30, seed=12)
    for graph in samples:
        adj, attrs, labeling = random_relabeling(graph, rng)
        relabeled = graphs.from_matrices(*graphs.apply_permutation(adj, attrs, PermutationMatrix.from_labeling(labeling)))
        assert graphs.canonical_key(graph) == graphs.canonical_key(relabeled)

    keys = {graphs.canonical_key(g) for g in samples}
    assert len(keys) == len(samples)


def test_canonical_labeling():
    rng = np.random.default_rng(8)
    for graph in random_graphs(5, 30, seed=13):
        adj, attrs, labeling = random_relabeling(graph, rng)
        relabeled = graphs.from_matrices(*graphs.apply_permutation(adj, attrs, PermutationMatrix.from_labeling(labeling)))
        order = graphs.canonical_labeling(graph)
        assert sorted(order) == list(range(graph.n))
        assert order[0] == graph.input_idx and order[-1] == graph.output_idx
        a_adj, a_ops = graphs.to_arrays(graph, order)
        b_adj, b_ops = graphs.to_arrays(relabeled, graphs.canonical_labeling(relabeled))
        assert (a_adj == b_adj).all() and a_ops == b_ops

    # above the brute-force limit the seed-0 topological order is used
    small = GraphService(brute_force_limit=4)
    graph = chain("a", "b", "c")
    assert small.canonical_labeling(graph) == small.topological_labeling(graph, seed=0)


def test_invariant_features():
    graph = diamond()
    assert graphs.longest_path_length(graph) == 2
    assert graphs.max_in_degree(graph) == 2
    assert graphs.op_paths(graph) == [("conv3x3",), ("maxpool",)]
    assert graphs.longest_path_length(chain("a", "b", "c")) == 4


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_") and callable(v)]
    for test in tests:
        test()
        print(f"✅ {test.__name__}")
    print(f"🎉 {len(tests)} graph tests passed")
