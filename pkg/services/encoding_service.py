import logging
from typing import Dict, Sequence, Tuple

import numpy as np

from models.encoding import EncodingScheme, SchemeKind
from models.graph import (
    INPUT,
    OUTPUT,
    PAD_NULL,
    AdjacencyMatrix,
    ArchGraph,
    AttributeVector,
    OoeGraph,
)
from services.graph_service import GraphService
from utils.errors import CapacityError, ConfigError, DimensionError, VocabularyError

logger = logging.getLogger(__name__)


class EncodingService:
    """Service for turning labeled graphs into fixed-width vectors"""

    def __init__(self, graph_service: GraphService):
        self.graph_service = graph_service
        self._index_cache: Dict[str, Dict[str, int]] = {}

    def _vocab_index(self, scheme: EncodingScheme) -> Dict[str, int]:
        key = "\x1f".join(scheme.vocab.tokens)
        index = self._index_cache.get(key)
        if index is None:
            index = scheme.vocab.index()
            self._index_cache[key] = index
        return index

    def op_ids(self, ops: Sequence[str], scheme: EncodingScheme) -> np.ndarray:
        """Vocabulary ids of `ops`, raising VocabularyError on unknown names"""
        index = self._vocab_index(scheme)
        try:
            return np.array([index[op] for op in ops], dtype=np.intp)
        except KeyError as e:
            raise VocabularyError(f"Unknown operation {e.args[0]!r}; vocabulary is {list(scheme.vocab.tokens)}")

    def _padded_adjacency(self, adj: np.ndarray, scheme: EncodingScheme) -> np.ndarray:
        n = adj.shape[0]
        if n > scheme.max_vertices:
            raise CapacityError(f"Graph has {n} vertices but the scheme holds at most {scheme.max_vertices}")
        padded = np.zeros((scheme.max_vertices, scheme.max_vertices), dtype=np.float64)
        padded[:n, :n] = adj
        return padded

    def encode_arrays(self, adj: np.ndarray, ops: Sequence[str], scheme: EncodingScheme) -> np.ndarray:
        """Encode labeled arrays according to scheme.kind"""
        if adj.shape != (len(ops), len(ops)):
            raise DimensionError(f"Adjacency {adj.shape} does not match {len(ops)} attributes")
        ids = self.op_ids(ops, scheme)
        padded = self._padded_adjacency(adj, scheme)
        n_max = scheme.max_vertices

        if scheme.kind == SchemeKind.GIAUG_OON:
            one_hot = np.zeros((n_max, scheme.vocab.size), dtype=np.float64)
            one_hot[np.arange(len(ids)), ids] = 1.0
            one_hot[len(ids):, self._vocab_index(scheme)[PAD_NULL]] = 1.0
            return np.concatenate([padded.ravel(), one_hot.ravel()])

        type_row = np.zeros(n_max, dtype=np.float64)
        type_row[: len(ids)] = ids
        return (padded * type_row[np.newaxis, :]).ravel()

    def encode_batch(self, adj_batch: np.ndarray, id_batch: np.ndarray, scheme: EncodingScheme) -> np.ndarray:
        """
        Encode k labelings at once

        Args:
            adj_batch: (k, n, n) labeled adjacency matrices
            id_batch: (k, n) vocabulary ids of the labeled attribute vectors
            scheme: Encoding scheme

        Returns:
            (k, scheme.width) float array, row r equal to encode_arrays of labeling r
        """
        k, n, _ = adj_batch.shape
        if n > scheme.max_vertices:
            raise CapacityError(f"Graph has {n} vertices but the scheme holds at most {scheme.max_vertices}")
        n_max = scheme.max_vertices
        padded = np.zeros((k, n_max, n_max), dtype=np.float64)
        padded[:, :n, :n] = adj_batch

        if scheme.kind == SchemeKind.GIAUG_OON:
            one_hot = np.zeros((k, n_max, scheme.vocab.size), dtype=np.float64)
            rows = np.broadcast_to(np.arange(n), (k, n))
            one_hot[np.arange(k)[:, None], rows, id_batch] = 1.0
            one_hot[:, n:, self._vocab_index(scheme)[PAD_NULL]] = 1.0
            return np.concatenate([padded.reshape(k, -1), one_hot.reshape(k, -1)], axis=1)

        type_rows = np.zeros((k, n_max), dtype=np.float64)
        type_rows[:, :n] = id_batch
        return (padded * type_rows[:, np.newaxis, :]).reshape(k, -1)

    def encode_oon(self, adjacency: AdjacencyMatrix, attributes: AttributeVector, scheme: EncodingScheme) -> np.ndarray:
        """
        concat(flatten(padded A), flatten(one-hot(padded m)))

        Raises:
            ConfigError: if the scheme is not giaug_oon
            VocabularyError: on an op outside the vocabulary
            CapacityError: if the graph exceeds scheme.max_vertices
        """
        if scheme.kind != SchemeKind.GIAUG_OON:
            raise ConfigError(f"encode_oon needs a giaug_oon scheme, got {scheme.kind.value}")
        if adjacency.n != attributes.n:
            raise DimensionError(f"Adjacency is {adjacency.n}x{adjacency.n} but attributes have {attributes.n} entries")
        return self.encode_arrays(adjacency.array(), attributes.values, scheme)

    def encode_renas(self, adjacency: AdjacencyMatrix, attributes: AttributeVector, scheme: EncodingScheme) -> np.ndarray:
        """Operation-type matrix baseline: entry (i, j) = A[i][j] * id(m[j]), flattened row-major"""
        if scheme.kind != SchemeKind.RENAS_BASELINE:
            raise ConfigError(f"encode_renas needs a renas_baseline scheme, got {scheme.kind.value}")
        if adjacency.n != attributes.n:
            raise DimensionError(f"Adjacency is {adjacency.n}x{adjacency.n} but attributes have {attributes.n} entries")
        return self.encode_arrays(adjacency.array(), attributes.values, scheme)

    def encode(self, adjacency: AdjacencyMatrix, attributes: AttributeVector, scheme: EncodingScheme) -> np.ndarray:
        if scheme.kind == SchemeKind.GIAUG_OON:
            return self.encode_oon(adjacency, attributes, scheme)
        return self.encode_renas(adjacency, attributes, scheme)

    def encode_graph(self, graph: ArchGraph, scheme: EncodingScheme, seed: int = 0) -> np.ndarray:
        """Encode `graph` under its seeded topological labeling"""
        order = self.graph_service.topological_labeling(graph, seed)
        adj, ops = self.graph_service.to_arrays(graph, order)
        return self.encode_arrays(adj, ops, scheme)

    def encode_canonical(self, graph: ArchGraph, scheme: EncodingScheme) -> np.ndarray:
        """Encode `graph` under its canonical labeling; isomorphic copies encode identically"""
        adj, ops = self.graph_service.to_arrays(graph, self.graph_service.canonical_labeling(graph))
        return self.encode_arrays(adj, ops, scheme)

    def decode_oon(self, encoding: np.ndarray, scheme: EncodingScheme) -> Tuple[AdjacencyMatrix, AttributeVector]:
        """Inverse of encode_oon; padding vertices (null rows) are dropped"""
        if scheme.kind != SchemeKind.GIAUG_OON:
            raise ConfigError("decode_oon needs a giaug_oon scheme")
        values = np.asarray(encoding, dtype=np.float64)
        if values.shape != (scheme.width,):
            raise DimensionError(f"Encoding has {values.size} values, scheme width is {scheme.width}")
        n_max = scheme.max_vertices
        adj = values[: n_max * n_max].reshape(n_max, n_max)
        one_hot = values[n_max * n_max:].reshape(n_max, scheme.vocab.size)
        ops = [scheme.vocab.tokens[int(i)] for i in one_hot.argmax(axis=1)]
        n = len(ops)
        while n > 0 and ops[n - 1] == PAD_NULL:
            n -= 1
        return (
            AdjacencyMatrix.from_array(adj[:n, :n].astype(np.int8)),
            AttributeVector(values=tuple(ops[:n])),
        )

    def ooe_to_oon(self, ooe_graph: OoeGraph) -> ArchGraph:
        """
        Convert an operation-on-edge cell into an operation-on-node graph

        Each op edge becomes a vertex; op vertex x feeds op vertex y iff x's
        head is y's tail. A fresh input vertex feeds every edge leaving the
        OOE input and a fresh output vertex collects every edge entering the
        OOE output.

        Raises:
            GraphValidationError: if the converted graph is not a valid cell
        """
        op_edges = ooe_graph.op_edges
        e = len(op_edges)
        input_idx, output_idx = 0, e + 1
        ops = [INPUT] + [op for _, _, op in op_edges] + [OUTPUT]
        edges = []
        for x, (tail_x, head_x, _) in enumerate(op_edges, start=1):
            if tail_x == ooe_graph.input_idx:
                edges.append((input_idx, x))
            if head_x == ooe_graph.output_idx:
                edges.append((x, output_idx))
            for y, (tail_y, _, _) in enumerate(op_edges, start=1):
                if head_x == tail_y:
                    edges.append((x, y))

        graph = ArchGraph(n=e + 2, edges=tuple(edges), ops=tuple(ops), input_idx=input_idx, output_idx=output_idx)
        self.graph_service.check(graph)
        logger.debug(f"Converted OOE cell with {e} op edges into {graph.n}-vertex OON graph")
        return graph
