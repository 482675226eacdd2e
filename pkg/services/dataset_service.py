import os
import math
import logging
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError as PydanticValidationError
from scipy.special import expit

from models.dataset import (
    AnnotatedDataset,
    AugmentedDataset,
    AugmentedRecord,
    DatasetRecord,
    SpaceKind,
    SyntheticSpaceSpec,
)
from models.encoding import EncodingScheme
from models.graph import INPUT, OUTPUT, ArchGraph, OoeGraph, OpVocabulary
from services.encoding_service import EncodingService
from services.graph_service import GraphService
from utils.errors import (
    ConfigError,
    EmptySplitError,
    GraphValidationError,
    ParseError,
    SamplingError,
    VocabularyError,
)
from utils.io import iter_jsonl, read_json, sidecar_path, write_json_atomic, write_jsonl

logger = logging.getLogger(__name__)

NASBENCH201_OOE_NODES = 4


class DatasetService:
    """Service for reading, writing, generating and splitting annotated datasets"""

    def __init__(self, graph_service: GraphService, encoding_service: EncodingService):
        self.graph_service = graph_service
        self.encoding_service = encoding_service

    # -- JSONL datasets ---------------------------------------------------

    def load_dataset(self, path: str, vocab: Optional[OpVocabulary] = None) -> AnnotatedDataset:
        """
        Load an annotated dataset from JSONL

        OOE records are converted to OON graphs on load. The vocabulary comes
        from `vocab`, else from the `.meta.json` sidecar, else it is derived
        from the ops present.

        Raises:
            ParseError: malformed line (with line number) or duplicate id
            GraphValidationError: invalid graph (with record id)
            VocabularyError: op outside a given vocabulary
        """
        if not os.path.exists(path):
            raise FileNotFoundError(f"Dataset file not found: {path}")

        meta: Dict[str, Any] = {}
        meta_file = sidecar_path(path, "meta")
        if os.path.exists(meta_file):
            meta = read_json(meta_file)

        records: List[DatasetRecord] = []
        seen_ids = set()
        saw_ooe = False
        for line_no, obj in iter_jsonl(path):
            record_id = obj.get("id")
            if not isinstance(record_id, str):
                raise ParseError(f"{path}:{line_no}: missing string field 'id'", line=line_no)
            if record_id in seen_ids:
                raise ParseError(f"{path}:{line_no}: duplicate id {record_id!r}", line=line_no)
            seen_ids.add(record_id)
            if "graph" not in obj or "performance" not in obj:
                raise ParseError(f"{path}:{line_no}: record {record_id} needs 'graph' and 'performance'", line=line_no)

            try:
                if "op_edges" in obj["graph"]:
                    saw_ooe = True
                    graph = self.encoding_service.ooe_to_oon(OoeGraph.model_validate(obj["graph"]))
                else:
                    graph = ArchGraph.from_json(obj["graph"])
                record = DatasetRecord(id=record_id, graph=graph, performance=obj["performance"])
            except GraphValidationError as e:
                raise GraphValidationError(f"record {record_id}: {str(e)}", violation=e.violation, record_id=record_id)
            except (PydanticValidationError, TypeError) as e:
                raise ParseError(f"{path}:{line_no}: record {record_id}: {str(e)}", line=line_no)

            self.graph_service.check(record.graph, record_id)
            records.append(record)

        if vocab is None and "vocab" in meta:
            vocab = OpVocabulary(tokens=tuple(meta["vocab"]))
        if vocab is None:
            vocab = OpVocabulary.from_ops([op for r in records for op in r.graph.ops])
        else:
            for record in records:
                for op in record.graph.ops:
                    if op not in vocab:
                        raise VocabularyError(f"record {record.id}: unknown operation {op!r}")

        max_vertices = max([r.graph.n for r in records] + [int(meta.get("max_vertices", 0)), 2])
        space_kind = SpaceKind(meta["space_kind"]) if "space_kind" in meta else (SpaceKind.OOE if saw_ooe else SpaceKind.OON)
        logger.info(f"Loaded {len(records)} records from {path} ({space_kind.value}, max_vertices={max_vertices})")
        return AnnotatedDataset(records=tuple(records), vocab=vocab, space_kind=space_kind, max_vertices=max_vertices)

    def save_dataset(self, dataset: AnnotatedDataset, path: str) -> None:
        """Write records as OON JSONL plus the `.meta.json` sidecar"""
        write_jsonl(path, (r.to_json() for r in dataset.records))
        write_json_atomic(sidecar_path(path, "meta"), dataset.meta())
        logger.info(f"Saved {len(dataset)} records to {path}")

    # -- augmented files --------------------------------------------------

    def save_scheme(self, scheme: EncodingScheme, artifact_path: str) -> None:
        write_json_atomic(sidecar_path(artifact_path, "scheme"), scheme.to_descriptor())

    def load_scheme(self, artifact_path: str) -> EncodingScheme:
        path = sidecar_path(artifact_path, "scheme")
        if not os.path.exists(path):
            raise FileNotFoundError(f"Scheme descriptor not found: {path}")
        try:
            return EncodingScheme.from_descriptor(read_json(path))
        except (KeyError, ValueError) as e:
            raise ParseError(f"Invalid scheme descriptor {path}: {str(e)}")

    def save_augmented(self, augmented: AugmentedDataset, path: str) -> None:
        write_jsonl(path, (r.to_json() for r in augmented.records))
        self.save_scheme(augmented.scheme, path)

    def load_augmented(self, path: str) -> AugmentedDataset:
        """
        Load an augmented JSONL file and its scheme sidecar

        Raises:
            ParseError: malformed line or an encoding of the wrong width
        """
        if not os.path.exists(path):
            raise FileNotFoundError(f"Augmented file not found: {path}")
        scheme = self.load_scheme(path)
        records: List[AugmentedRecord] = []
        for line_no, obj in iter_jsonl(path):
            try:
                encoding = np.asarray(obj["encoding"], dtype=np.float64)
                performance = float(obj["performance"])
                source_id = str(obj["source_id"])
            except (KeyError, TypeError, ValueError) as e:
                raise ParseError(f"{path}:{line_no}: invalid augmented record: {str(e)}", line=line_no)
            if encoding.shape != (scheme.width,):
                raise ParseError(
                    f"{path}:{line_no}: encoding width {encoding.size} does not match scheme width {scheme.width}",
                    line=line_no,
                )
            records.append(AugmentedRecord(encoding=encoding, performance=performance, source_id=source_id))
        return AugmentedDataset(records=records, scheme=scheme)

    # -- synthetic benchmark ---------------------------------------------

    def features(self, graph: ArchGraph, spec: SyntheticSpaceSpec) -> np.ndarray:
        """Isomorphism-invariant features: op counts, edge count, longest path, max in-degree"""
        counts = [sum(1 for op in graph.ops if op == name) for name in spec.vocab]
        return np.array(
            counts + [
                len(graph.edges),
                self.graph_service.longest_path_length(graph),
                self.graph_service.max_in_degree(graph),
            ],
            dtype=np.float64,
        )

    def score_graph(self, graph: ArchGraph, spec: SyntheticSpaceSpec) -> float:
        """Noise-free synthetic performance"""
        z = float(np.dot(spec.score_weights, self.features(graph, spec))) + spec.bias
        return float(expit(z))

    def _sample_cell(self, spec: SyntheticSpaceSpec, rng: np.random.Generator) -> Optional[ArchGraph]:
        n = spec.n_intermediate + 2
        upper = np.triu(rng.random((n, n)) < spec.edge_density, k=1)
        ops = [INPUT] + [spec.vocab[int(i)] for i in rng.integers(len(spec.vocab), size=n - 2)] + [OUTPUT]
        rows, cols = np.nonzero(upper)
        graph = ArchGraph(n=n, edges=tuple(zip(rows.tolist(), cols.tolist())), ops=tuple(ops), input_idx=0, output_idx=n - 1)
        if not self.graph_service.validate(graph).ok:
            return None
        # random vertex ids so the stored labeling carries no topological hint
        shuffle = rng.permutation(n).tolist()
        new_ops = [""] * n
        for old, new in enumerate(shuffle):
            new_ops[new] = ops[old]
        return ArchGraph(
            n=n,
            edges=tuple((shuffle[u], shuffle[v]) for u, v in graph.edges),
            ops=tuple(new_ops),
            input_idx=shuffle[0],
            output_idx=shuffle[n - 1],
        )

    def generate_synthetic(self, spec: SyntheticSpaceSpec, count: int, max_attempts_per_cell: int = 1000) -> AnnotatedDataset:
        """
        Sample `count` pairwise non-isomorphic valid cells and score them

        performance = sigmoid(w . f(g) + bias + eps), eps ~ N(0, noise_sigma),
        clipped to [0, 1]. Deterministic for a fixed spec.seed.
        """
        if count < 1:
            raise ConfigError(f"count must be at least 1, got {count}")
        rng = np.random.default_rng(spec.seed)
        n = spec.n_intermediate + 2
        exact_keys = n <= self.graph_service.brute_force_limit
        records: List[DatasetRecord] = []
        seen = set()
        attempts = 0
        while len(records) < count:
            attempts += 1
            if attempts > max_attempts_per_cell * count:
                raise SamplingError(
                    f"Only {len(records)} distinct cells found after {attempts - 1} attempts; "
                    f"the space may hold fewer than {count} cells"
                )
            graph = self._sample_cell(spec, rng)
            if graph is None:
                continue
            key = self.graph_service.canonical_key(graph) if exact_keys else self.graph_service.canonical_key(graph, cap=1)
            if key in seen:
                continue
            seen.add(key)
            z = float(np.dot(spec.score_weights, self.features(graph, spec))) + spec.bias
            if spec.noise_sigma > 0:
                z += float(rng.normal(0.0, spec.noise_sigma))
            performance = float(np.clip(expit(z), 0.0, 1.0))
            records.append(DatasetRecord(id=f"syn-{len(records):06d}", graph=graph, performance=performance))

        logger.info(f"Generated {count} synthetic cells with {n} vertices in {attempts} attempts")
        return AnnotatedDataset(
            records=tuple(records),
            vocab=OpVocabulary.from_ops(spec.vocab),
            space_kind=SpaceKind.OON,
            max_vertices=n,
        )

    # -- splitting --------------------------------------------------------

    def split(self, dataset: AnnotatedDataset, train_fraction: float, seed: int = 0) -> Tuple[AnnotatedDataset, AnnotatedDataset]:
        """
        Seeded uniform train/test partition; train size is round-half-up(fraction * n), at least 1

        Raises:
            ConfigError: fraction outside (0, 1)
            EmptySplitError: if either side would be empty
        """
        if not 0.0 < train_fraction < 1.0:
            raise ConfigError(f"train fraction must lie in (0, 1), got {train_fraction}")
        n = len(dataset)
        k = max(1, int(math.floor(train_fraction * n + 0.5)))
        if k >= n:
            raise EmptySplitError(f"Splitting {n} records with fraction {train_fraction} leaves the test side empty")
        perm = np.random.default_rng(seed).permutation(n)
        train_idx = sorted(perm[:k].tolist())
        test_idx = sorted(perm[k:].tolist())
        return dataset.subset(train_idx), dataset.subset(test_idx)

    # -- NAS-Bench converters ---------------------------------------------

    @staticmethod
    def _accuracy(entry: Dict[str, Any]) -> float:
        for key in ("performance", "accuracy", "final_test_accuracy", "test_accuracy", "validation_accuracy"):
            if key in entry:
                value = float(entry[key])
                return value / 100.0 if value > 1.0 else value
        raise ParseError(f"No accuracy field in entry with keys {sorted(entry)}")

    def from_nasbench101_entry(self, entry: Dict[str, Any], record_id: str) -> DatasetRecord:
        """
        Map a pre-extracted NAS-Bench-101 record onto an OON record

        Expects "module_adjacency" (upper-triangular 0/1 matrix, input first,
        output last) and "module_operations"; vertices off every input->output
        path are pruned the way the benchmark prunes them.
        """
        matrix = np.asarray(entry["module_adjacency"], dtype=np.int8)
        ops = list(entry["module_operations"])
        n = len(ops)
        if matrix.shape != (n, n):
            raise ParseError(f"{record_id}: adjacency {matrix.shape} does not match {n} operations")

        succs = [np.nonzero(matrix[i])[0].tolist() for i in range(n)]
        preds = [np.nonzero(matrix[:, j])[0].tolist() for j in range(n)]
        keep = sorted(GraphService._reachable(0, succs) & GraphService._reachable(n - 1, preds))
        if 0 not in keep or n - 1 not in keep:
            raise GraphValidationError(f"{record_id}: output is unreachable from input", violation="unreachable_vertex", record_id=record_id)
        position = {old: new for new, old in enumerate(keep)}
        edges = [(position[u], position[v]) for u in keep for v in succs[u] if v in position]
        graph = ArchGraph(
            n=len(keep),
            edges=tuple(edges),
            ops=tuple(ops[i] for i in keep),
            input_idx=0,
            output_idx=len(keep) - 1,
        )
        self.graph_service.check(graph, record_id)
        return DatasetRecord(id=record_id, graph=graph, performance=self._accuracy(entry))

    @staticmethod
    def parse_nasbench201_arch(arch_str: str) -> OoeGraph:
        """'|op~0|+|op~0|op~1|+|op~0|op~1|op~2|' -> OOE cell over 4 nodes"""
        op_edges = []
        nodes = [part for part in arch_str.split("+") if part.strip()]
        for target, node in enumerate(nodes, start=1):
            for item in node.strip().strip("|").split("|"):
                if not item:
                    continue
                try:
                    op, source = item.split("~")
                    op_edges.append((int(source), target, op))
                except ValueError:
                    raise ParseError(f"Malformed NAS-Bench-201 edge {item!r} in {arch_str!r}")
        n = len(nodes) + 1
        return OoeGraph(n=n, op_edges=tuple(op_edges), input_idx=0, output_idx=n - 1)

    def convert_nasbench(self, rows: Iterable[Tuple[int, Dict[str, Any]]], fmt: str) -> Iterable[Dict[str, Any]]:
        """Turn pre-extracted benchmark rows into dataset JSONL objects"""
        for line_no, entry in rows:
            record_id = str(entry.get("id", f"{fmt}-{line_no:06d}"))
            if fmt == "nb101":
                yield self.from_nasbench101_entry(entry, record_id).to_json()
            elif fmt == "nb201":
                ooe = self.parse_nasbench201_arch(entry["arch_str"])
                self.encoding_service.ooe_to_oon(ooe)
                yield {"id": record_id, "graph": ooe.to_json(), "performance": self._accuracy(entry)}
            else:
                raise ConfigError(f"Unknown converter format {fmt!r}; use nb101 or nb201")
