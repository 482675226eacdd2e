import hashlib
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from itertools import islice, permutations
from math import factorial
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Set, TextIO, Tuple

import numpy as np

from models.dataset import (
    AnnotatedDataset,
    AugmentationStats,
    AugmentedDataset,
    AugmentedRecord,
    DatasetRecord,
)
from models.encoding import EncodingScheme
from models.graph import INPUT, OUTPUT, AdjacencyMatrix, ArchGraph, AttributeVector, PermutationMatrix
from services.encoding_service import EncodingService
from services.graph_service import GraphService
from utils.errors import ConfigError, DimensionError
from utils.io import dump_json

logger = logging.getLogger(__name__)

BATCH_SIZE = 4096

Labeling = Tuple[int, ...]


def _unrank(rank: int, items: Sequence[int]) -> List[int]:
    """The rank-th lexicographic permutation of `items` (sorted ascending)"""
    pool = list(items)
    out = []
    for i in range(len(pool), 0, -1):
        block = factorial(i - 1)
        index, rank = divmod(rank, block)
        out.append(pool.pop(index))
    return out


def record_seed(seed: int, index: int) -> int:
    """Independent per-record seed derived from the run seed"""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


class AugmentationService:
    """Service for isomorphic augmentation of annotated architectures"""

    def __init__(self, graph_service: GraphService, encoding_service: EncodingService, threads: int = 1):
        self.graph_service = graph_service
        self.encoding_service = encoding_service
        self.threads = max(1, threads)

    def enumerate_labelings(
        self,
        n: int,
        input_pos: int,
        output_pos: int,
        cap: Optional[int] = None,
        seed: int = 0,
    ) -> Iterator[Labeling]:
        """
        Labelings of n vertices that keep input_pos and output_pos fixed

        Without a cap every one of the (n-2)! labelings is produced in
        lexicographic order. With cap c < (n-2)! the identity is produced
        first, followed by c-1 labelings sampled uniformly without replacement
        (seeded), in ascending lexicographic rank.
        """
        if n < 2:
            raise DimensionError(f"Need at least 2 vertices, got {n}")
        if cap is not None and cap < 1:
            raise ConfigError(f"cap must be at least 1, got {cap}")
        free = [i for i in range(n) if i not in (input_pos, output_pos)]
        total = factorial(len(free))

        def build(values: Sequence[int]) -> Labeling:
            labeling = list(range(n))
            for position, value in zip(free, values):
                labeling[position] = value
            return tuple(labeling)

        if cap is None or cap >= total:
            for values in permutations(free):
                yield build(values)
            return

        rng = random.Random(seed)
        # (n-2)! outgrows ssize_t past 22 vertices, so draw ranks one at a time
        picked: Set[int] = set()
        while len(picked) < cap - 1:
            picked.add(rng.randrange(1, total))
        ranks = sorted(picked)
        yield build(free)
        for rank in ranks:
            yield build(_unrank(rank, free))

    def augment_one(self, adjacency: AdjacencyMatrix, attributes: AttributeVector, labeling: Sequence[int]) -> ArchGraph:
        """
        Isomorphic graph obtained by relabeling (A, m) with labeling l

        P has P[i][l[i]] = 1; the result is built from (P A P^-1, m P^-1).

        Raises:
            DimensionError: if the labeling does not match the matrices
        """
        n = adjacency.n
        if attributes.n != n or len(labeling) != n:
            raise DimensionError(f"Labeling of length {len(labeling)} for {n}x{n} adjacency and {attributes.n} attributes")
        if sorted(labeling) != list(range(n)):
            raise DimensionError(f"{list(labeling)} is not a permutation of 0..{n - 1}")
        for token in (INPUT, OUTPUT):
            if token in attributes.values:
                pos = attributes.values.index(token)
                if labeling[pos] != pos:
                    raise DimensionError(f"Labeling moves the {token} vertex at position {pos}")

        permutation = PermutationMatrix.from_labeling(labeling)
        new_adj, new_attrs = self.graph_service.apply_permutation(adjacency, attributes, permutation)
        return self.graph_service.from_matrices(new_adj, new_attrs)

    def source_candidates(
        self,
        graph: ArchGraph,
        scheme: EncodingScheme,
        cap: Optional[int],
        seed: int,
    ) -> Iterator[np.ndarray]:
        """Encodings of the candidate relabelings of one source graph, in labeling-rank order, in batches"""
        order = self.graph_service.topological_labeling(graph, seed)
        adj, ops = self.graph_service.to_arrays(graph, order)
        ids = self.encoding_service.op_ids(ops, scheme)
        labelings = self.enumerate_labelings(graph.n, 0, graph.n - 1, cap, seed)
        while True:
            chunk = list(islice(labelings, BATCH_SIZE))
            if not chunk:
                return
            perms = np.array(chunk, dtype=np.intp)
            adj_batch = adj[perms[:, :, None], perms[:, None, :]]
            yield self.encoding_service.encode_batch(adj_batch, ids[perms], scheme)

    def candidate_matrix(self, graph: ArchGraph, scheme: EncodingScheme, cap: Optional[int], seed: int) -> np.ndarray:
        return np.vstack(list(self.source_candidates(graph, scheme, cap, seed)))

    def _candidate_stream(
        self,
        records: Sequence[DatasetRecord],
        scheme: EncodingScheme,
        cap: Optional[int],
        seed: int,
    ) -> Iterator[Tuple[int, DatasetRecord, np.ndarray]]:
        if self.threads == 1:
            for index, record in enumerate(records):
                yield index, record, self.candidate_matrix(record.graph, scheme, cap, record_seed(seed, index))
            return

        window = self.threads * 4
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            for start in range(0, len(records), window):
                batch = records[start:start + window]
                matrices = executor.map(
                    lambda item: self.candidate_matrix(item[1].graph, scheme, cap, record_seed(seed, item[0])),
                    list(enumerate(batch, start=start)),
                )
                for offset, matrix in enumerate(matrices):
                    yield start + offset, batch[offset], matrix

    def iter_augmented(
        self,
        dataset: AnnotatedDataset,
        scheme: EncodingScheme,
        cap: Optional[int] = None,
        seed: int = 0,
        stats: Optional[AugmentationStats] = None,
        on_conflict: Optional[Callable[[str], None]] = None,
    ) -> Iterator[AugmentedRecord]:
        """
        Stream unique augmented records in (source order, labeling rank) order

        The dedup set is global across sources; on an encoding collision the
        first record wins and collisions with a different performance are
        reported through `on_conflict`.
        """
        stats = stats if stats is not None else AugmentationStats()
        seen: Dict[bytes, int] = {}
        records = dataset.records

        for index, record, matrix in self._candidate_stream(records, scheme, cap, seed):
            kept = 0
            for rank, row in enumerate(matrix):
                key = hashlib.sha256(row.tobytes()).digest()
                first = seen.get(key)
                if first is None:
                    seen[key] = index
                    kept += 1
                    yield AugmentedRecord(
                        encoding=row.copy(),
                        performance=record.performance,
                        source_id=record.id,
                        labeling_rank=rank,
                    )
                elif first != index and records[first].performance != record.performance:
                    stats.conflicts += 1
                    message = (
                        f"collision encoding={key.hex()[:16]} kept={records[first].id} "
                        f"({records[first].performance}) dropped={record.id} ({record.performance}) rank={rank}"
                    )
                    logger.warning(message)
                    if on_conflict is not None:
                        on_conflict(message)
            stats.candidates += len(matrix)
            stats.unique += kept
            stats.per_source_candidates[record.id] = len(matrix)
            stats.per_source_unique[record.id] = kept
            logger.debug(f"Source {record.id}: {len(matrix)} candidates, {kept} kept")

        logger.info(f"Augmentation finished: candidates={stats.candidates} unique={stats.unique} conflicts={stats.conflicts}")

    def augment_dataset(
        self,
        dataset: AnnotatedDataset,
        scheme: EncodingScheme,
        cap: Optional[int] = None,
        seed: int = 0,
    ) -> AugmentedDataset:
        """
        Augment every record, encode, and deduplicate (in memory)

        Raises:
            VocabularyError: if a graph uses an op outside the scheme vocabulary
        """
        for record in dataset.records:
            self.graph_service.check(record.graph, record.id)
        stats = AugmentationStats()
        records = list(self.iter_augmented(dataset, scheme, cap, seed, stats))
        return AugmentedDataset(records=records, scheme=scheme, stats=stats)

    def augment_to_file(
        self,
        dataset: AnnotatedDataset,
        scheme: EncodingScheme,
        out: TextIO,
        conflict_log: Optional[TextIO] = None,
        cap: Optional[int] = None,
        seed: int = 0,
    ) -> AugmentationStats:
        """Stream augmented records as JSONL into `out`; only the dedup set stays in memory"""
        for record in dataset.records:
            self.graph_service.check(record.graph, record.id)
        stats = AugmentationStats()

        def log_conflict(message: str) -> None:
            if conflict_log is not None:
                conflict_log.write(message + "\n")

        for augmented in self.iter_augmented(dataset, scheme, cap, seed, stats, log_conflict):
            out.write(dump_json({
                "source_id": augmented.source_id,
                "encoding": augmented.encoding.tolist(),
                "performance": augmented.performance,
            }))
            out.write("\n")
        return stats
