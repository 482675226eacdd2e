import hashlib
import logging
from collections import deque
from itertools import islice, permutations
from typing import List, Optional, Sequence, Set, Tuple

import numpy as np

from models.graph import (
    INPUT,
    OUTPUT,
    AdjacencyMatrix,
    ArchGraph,
    AttributeVector,
    PermutationMatrix,
    ValidationReport,
    Violation,
)
from utils.errors import CycleError, DimensionError, GraphValidationError, SizeError

logger = logging.getLogger(__name__)


def _fail(violation: Violation, message: str) -> ValidationReport:
    return ValidationReport(ok=False, violation=violation, message=message)


class GraphService:
    """Service for validating, labeling and relabeling architecture graphs"""

    def __init__(self, brute_force_limit: int = 10):
        self.brute_force_limit = brute_force_limit

    # -- validation -------------------------------------------------------

    def validate(self, graph: ArchGraph) -> ValidationReport:
        """
        Check every ArchGraph invariant and report the first one violated

        Args:
            graph: Graph to check

        Returns:
            ValidationReport; ok=True when the graph is a valid cell
        """
        n = graph.n
        if len(graph.ops) != n:
            return _fail(Violation.STRUCTURE, f"ops has {len(graph.ops)} entries for {n} vertices")
        if not (0 <= graph.input_idx < n and 0 <= graph.output_idx < n):
            return _fail(Violation.STRUCTURE, "input/output index out of range")
        if graph.input_idx == graph.output_idx:
            return _fail(Violation.STRUCTURE, "input and output must be distinct vertices")
        for u, v in graph.edges:
            if not (0 <= u < n and 0 <= v < n):
                return _fail(Violation.STRUCTURE, f"edge ({u}->{v}) references a missing vertex")

        for u, v in graph.edges:
            if u == v:
                return _fail(Violation.CYCLE, f"self-loop on vertex {u}")
        if self._kahn_order(graph) is None:
            return _fail(Violation.CYCLE, "graph contains a directed cycle")

        preds = graph.predecessors()
        succs = graph.successors()
        if preds[graph.input_idx]:
            return _fail(Violation.INPUT_IN_DEGREE, f"input vertex {graph.input_idx} has incoming edges")
        if succs[graph.output_idx]:
            return _fail(Violation.OUTPUT_OUT_DEGREE, f"output vertex {graph.output_idx} has outgoing edges")

        if graph.ops[graph.input_idx] != INPUT or graph.ops[graph.output_idx] != OUTPUT:
            return _fail(Violation.IO_TOKENS, "input/output vertices must carry the input/output tokens")
        for i, op in enumerate(graph.ops):
            if op in (INPUT, OUTPUT) and i not in (graph.input_idx, graph.output_idx):
                return _fail(Violation.IO_TOKENS, f"vertex {i} carries reserved token {op!r}")

        forward = self._reachable(graph.input_idx, succs)
        backward = self._reachable(graph.output_idx, preds)
        for i in range(n):
            if i not in forward or i not in backward:
                return _fail(Violation.UNREACHABLE, f"vertex {i} is not on an input->output path")

        return ValidationReport(ok=True)

    def check(self, graph: ArchGraph, record_id: str = "") -> None:
        """Raise GraphValidationError when validate() fails"""
        report = self.validate(graph)
        if not report.ok:
            where = f"record {record_id}: " if record_id else ""
            logger.debug(f"Rejected graph {where}{report.violation.value}")
            raise GraphValidationError(
                f"{where}{report.violation.value}: {report.message}",
                violation=report.violation.value,
                record_id=record_id,
            )

    @staticmethod
    def _reachable(start: int, adjacency: List[List[int]]) -> Set[int]:
        seen = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return seen

    @staticmethod
    def _kahn_order(graph: ArchGraph) -> Optional[List[int]]:
        indegree = [0] * graph.n
        for _, v in graph.edges:
            indegree[v] += 1
        succs = graph.successors()
        ready = deque(i for i in range(graph.n) if indegree[i] == 0)
        order = []
        while ready:
            u = ready.popleft()
            order.append(u)
            for v in succs[u]:
                indegree[v] -= 1
                if indegree[v] == 0:
                    ready.append(v)
        return order if len(order) == graph.n else None

    # -- labeling ---------------------------------------------------------

    def topological_labeling(self, graph: ArchGraph, seed: int = 0) -> List[int]:
        """
        Random topological order: input first, output last, ties drawn from a seeded RNG

        Args:
            graph: A graph passing validate()
            seed: RNG seed; the same seed always yields the same order

        Returns:
            List of vertex indices; position i holds the vertex labeled i
        """
        rng = np.random.default_rng(seed)
        indegree = [0] * graph.n
        for _, v in graph.edges:
            indegree[v] += 1
        succs = graph.successors()
        ready = sorted(i for i in range(graph.n) if indegree[i] == 0)
        order: List[int] = []
        while ready:
            candidates = [v for v in ready if v != graph.output_idx] or ready
            if graph.input_idx in candidates:
                pick = graph.input_idx
            else:
                pick = candidates[int(rng.integers(len(candidates)))]
            ready.remove(pick)
            order.append(pick)
            for v in succs[pick]:
                indegree[v] -= 1
                if indegree[v] == 0:
                    ready.append(v)
            ready.sort()
        if len(order) != graph.n:
            raise CycleError(f"Graph with {graph.n} vertices is not a DAG")
        return order

    # -- matrices ---------------------------------------------------------

    def to_arrays(self, graph: ArchGraph, order: Sequence[int]) -> Tuple[np.ndarray, Tuple[str, ...]]:
        """Adjacency array and op tuple under the labeling `order`"""
        n = graph.n
        if len(order) != n or sorted(order) != list(range(n)):
            raise DimensionError(f"Order {list(order)} is not a permutation of {n} vertices")
        position = [0] * n
        for label, vertex in enumerate(order):
            position[vertex] = label
        adj = np.zeros((n, n), dtype=np.int8)
        for u, v in graph.edges:
            adj[position[u], position[v]] = 1
        ops = tuple(graph.ops[vertex] for vertex in order)
        return adj, ops

    def to_matrices(self, graph: ArchGraph, order: Sequence[int]) -> Tuple[AdjacencyMatrix, AttributeVector]:
        adj, ops = self.to_arrays(graph, order)
        return AdjacencyMatrix.from_array(adj), AttributeVector(values=ops)

    def graph_from_arrays(self, adj: np.ndarray, ops: Sequence[str]) -> ArchGraph:
        """Build (and validate) the graph whose vertex i is labeled i"""
        n = len(ops)
        if adj.shape != (n, n):
            raise DimensionError(f"Adjacency {adj.shape} does not match {n} attributes")
        ops = tuple(ops)
        input_idx = ops.index(INPUT) if INPUT in ops else 0
        output_idx = ops.index(OUTPUT) if OUTPUT in ops else n - 1
        rows, cols = np.nonzero(adj)
        graph = ArchGraph(
            n=n,
            edges=tuple(zip(rows.tolist(), cols.tolist())),
            ops=ops,
            input_idx=input_idx,
            output_idx=output_idx,
        )
        self.check(graph)
        return graph

    def from_matrices(self, adjacency: AdjacencyMatrix, attributes: AttributeVector) -> ArchGraph:
        """
        Reconstruct a graph from its labeled matrices

        Raises:
            DimensionError: if the matrix and vector sizes differ
            GraphValidationError: if the reconstruction is not a valid cell
        """
        if adjacency.n != attributes.n:
            raise DimensionError(f"Adjacency is {adjacency.n}x{adjacency.n} but attributes have {attributes.n} entries")
        return self.graph_from_arrays(adjacency.array(), attributes.values)

    @staticmethod
    def relabel(adj: np.ndarray, ops: Sequence[str], labeling: Sequence[int]) -> Tuple[np.ndarray, Tuple[str, ...]]:
        """A' = P A P^-1 and m' = m P^-1 with P[i][labeling[i]] = 1, done by index relabeling"""
        idx = np.asarray(labeling, dtype=np.intp)
        return adj[np.ix_(idx, idx)], tuple(ops[j] for j in idx)

    def apply_permutation(
        self,
        adjacency: AdjacencyMatrix,
        attributes: AttributeVector,
        permutation: PermutationMatrix,
    ) -> Tuple[AdjacencyMatrix, AttributeVector]:
        """
        Relabel matrices with a permutation matrix: (P A P^-1, m P^-1)

        Raises:
            DimensionError: if the three dimensions disagree
        """
        if not (adjacency.n == attributes.n == permutation.n):
            raise DimensionError(
                f"Dimensions disagree: A={adjacency.n}, m={attributes.n}, P={permutation.n}"
            )
        p = permutation.array()
        new_adj = p @ adjacency.array().astype(np.int64) @ p.T
        _, new_ops = self.relabel(adjacency.array(), attributes.values, permutation.labeling)
        return AdjacencyMatrix.from_array(new_adj), AttributeVector(values=new_ops)

    # -- isomorphism ------------------------------------------------------

    @staticmethod
    def intermediate_permutations(n: int, cap: Optional[int] = None) -> np.ndarray:
        """Labelings fixing positions 0 and n-1, lexicographic, as a (k, n) array"""
        if n < 2:
            return np.arange(n, dtype=np.intp).reshape(1, n)
        perms = permutations(range(1, n - 1))
        if cap is not None:
            perms = islice(perms, cap)
        rows = [(0, *p, n - 1) for p in perms]
        return np.array(rows, dtype=np.intp).reshape(len(rows), n)

    def _io_order(self, graph: ArchGraph) -> List[int]:
        middle = [i for i in range(graph.n) if i not in (graph.input_idx, graph.output_idx)]
        return [graph.input_idx, *middle, graph.output_idx]

    def is_isomorphic(self, g1: ArchGraph, g2: ArchGraph) -> bool:
        """
        Brute-force labeled-graph isomorphism with input and output pinned

        Raises:
            SizeError: if the graphs exceed the brute-force limit
        """
        if g1.n != g2.n:
            return False
        if g1.n > self.brute_force_limit:
            raise SizeError(f"{g1.n} vertices exceeds the brute-force limit of {self.brute_force_limit}")
        if sorted(g1.ops) != sorted(g2.ops) or len(g1.edges) != len(g2.edges):
            return False

        adj1, ops1 = self.to_arrays(g1, self._io_order(g1))
        adj2, ops2 = self.to_arrays(g2, self._io_order(g2))
        names = {name: i for i, name in enumerate(sorted(set(ops1)))}
        ids1 = np.array([names[o] for o in ops1], dtype=np.intp)
        ids2 = np.array([names[o] for o in ops2], dtype=np.intp)

        perms = self.intermediate_permutations(g1.n)
        op_match = (ids1[perms] == ids2).all(axis=1)
        if not op_match.any():
            return False
        perms = perms[op_match]
        relabeled = adj1[perms[:, :, None], perms[:, None, :]]
        return bool((relabeled == adj2).all(axis=(1, 2)).any())

    def _minimal_relabeling(self, graph: ArchGraph, cap: Optional[int]) -> Tuple[List[int], bytes, List[str]]:
        """Vertex order whose labeled matrices give the smallest byte string, plus that string"""
        if cap is None and graph.n > self.brute_force_limit:
            raise SizeError(f"{graph.n} vertices exceeds the brute-force limit of {self.brute_force_limit}")
        base = self.topological_labeling(graph, seed=0)
        adj, ops = self.to_arrays(graph, base)
        names = sorted(set(ops))
        index = {name: i for i, name in enumerate(names)}
        ids = np.array([index[o] for o in ops], dtype=np.uint8)

        perms = self.intermediate_permutations(graph.n, cap)
        relabeled = adj[perms[:, :, None], perms[:, None, :]].reshape(len(perms), -1).astype(np.uint8)
        rows = [row.tobytes() for row in np.hstack([relabeled, ids[perms]])]
        best = min(range(len(rows)), key=rows.__getitem__)
        return [base[j] for j in perms[best]], rows[best], names

    def canonical_labeling(self, graph: ArchGraph) -> List[int]:
        """
        Labeling shared by every isomorphic copy of `graph`

        Up to the brute-force limit this is the minimal relabeling behind
        canonical_key; larger graphs fall back to the seed-0 topological order.
        """
        if graph.n > self.brute_force_limit:
            return self.topological_labeling(graph, seed=0)
        order, _, _ = self._minimal_relabeling(graph, None)
        return order

    def canonical_key(self, graph: ArchGraph, cap: Optional[int] = None) -> str:
        """
        Minimum labeled-matrix byte string over input/output-fixing relabelings, hashed

        Uncapped, two graphs share a key iff they are isomorphic; with a cap
        only the first `cap` lexicographic relabelings are scanned.
        """
        _, best, names = self._minimal_relabeling(graph, cap)
        digest = hashlib.sha256()
        digest.update(f"{graph.n}|{','.join(names)}|".encode("utf-8"))
        digest.update(best)
        return digest.hexdigest()

    # -- invariant features ----------------------------------------------

    def longest_path_length(self, graph: ArchGraph) -> int:
        """Edges on the longest input->output path"""
        order = self.topological_labeling(graph, seed=0)
        dist = {v: -1 for v in range(graph.n)}
        dist[graph.input_idx] = 0
        succs = graph.successors()
        for u in order:
            if dist[u] < 0:
                continue
            for v in succs[u]:
                dist[v] = max(dist[v], dist[u] + 1)
        return max(dist[graph.output_idx], 0)

    @staticmethod
    def max_in_degree(graph: ArchGraph) -> int:
        return max((len(p) for p in graph.predecessors()), default=0)

    def op_paths(self, graph: ArchGraph) -> List[Tuple[str, ...]]:
        """Operation sequences of every input->output path (reserved tokens excluded)"""
        succs = graph.successors()
        paths: List[Tuple[str, ...]] = []

        def walk(u: int, trail: Tuple[str, ...]) -> None:
            if u == graph.output_idx:
                paths.append(trail)
                return
            for v in succs[u]:
                walk(v, trail if v == graph.output_idx else trail + (graph.ops[v],))

        walk(graph.input_idx, ())
        return sorted(paths)
