import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from models.dataset import SpaceKind
from models.graph import INPUT, OUTPUT, ArchGraph, OoeGraph
from models.predictor import Predictor
from models.search import GaConfig, GenerationStats, SearchResult, SearchSpaceDef
from services.encoding_service import EncodingService
from services.graph_service import GraphService
from services.predictor_service import PredictorService
from utils.errors import ConfigError, RepairError, SamplingError

logger = logging.getLogger(__name__)

SAMPLE_RETRIES = 10000
REPAIR_RETRIES = 200

Seed = Union[int, np.random.Generator, np.random.SeedSequence]
Fitness = Callable[[ArchGraph], float]


def _rng(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class Genome:
    """
    Fixed-length GA individual

    OON spaces: one op index per intermediate slot (positions 1..N-2 of the
    padded cell) and one bit per upper-triangular edge slot.
    OOE spaces: one op index per edge of the complete DAG; `edges` is empty.
    """
    ops: Tuple[int, ...]
    edges: Tuple[int, ...] = ()


class SearchService:
    """Genetic search over a cell space with a predictor (or any scorer) as fitness"""

    def __init__(
        self,
        graph_service: GraphService,
        encoding_service: EncodingService,
        predictor_service: Optional[PredictorService] = None,
        threads: int = 1,
    ):
        self.graph_service = graph_service
        self.encoding_service = encoding_service
        self.predictor_service = predictor_service
        self.threads = max(1, threads)

    # -- genome layout ----------------------------------------------------

    @staticmethod
    def edge_slots(n: int) -> List[Tuple[int, int]]:
        return [(i, j) for i in range(n) for j in range(i + 1, n)]

    def _check_space(self, space: SearchSpaceDef) -> None:
        if not space.vocab.op_names:
            raise ConfigError("Search space vocabulary has no operations")
        if space.space_kind == SpaceKind.OON:
            if space.max_vertices < 3:
                raise ConfigError("OON search spaces need max_vertices >= 3 (one intermediate vertex)")
            if space.max_edges is not None and space.max_edges < 2:
                raise ConfigError("max_edges below 2 admits no cell with an intermediate vertex")

    def decode(self, genome: Genome, space: SearchSpaceDef) -> Optional[ArchGraph]:
        """Graph of a genome, or None when it is not admissible in the space"""
        names = space.vocab.op_names
        if space.space_kind == SpaceKind.OOE:
            slots = self.edge_slots(space.max_vertices)
            ooe = OoeGraph(
                n=space.max_vertices,
                op_edges=tuple((u, v, names[o]) for (u, v), o in zip(slots, genome.ops)),
                input_idx=0,
                output_idx=space.max_vertices - 1,
            )
            return self.encoding_service.ooe_to_oon(ooe)

        n = space.max_vertices
        slots = self.edge_slots(n)
        succs: List[List[int]] = [[] for _ in range(n)]
        preds: List[List[int]] = [[] for _ in range(n)]
        for (u, v), bit in zip(slots, genome.edges):
            if bit:
                succs[u].append(v)
                preds[v].append(u)
        keep = sorted(GraphService._reachable(0, succs) & GraphService._reachable(n - 1, preds))
        if 0 not in keep or n - 1 not in keep or len(keep) < 3:
            return None
        position = {old: new for new, old in enumerate(keep)}
        edges = [(position[u], position[v]) for u in keep for v in succs[u] if v in position]
        if space.max_edges is not None and len(edges) > space.max_edges:
            return None
        ops = [INPUT] + [names[genome.ops[i - 1]] for i in keep[1:-1]] + [OUTPUT]
        return ArchGraph(n=len(keep), edges=tuple(edges), ops=tuple(ops), input_idx=0, output_idx=len(keep) - 1)

    def to_genome(self, graph: ArchGraph, space: SearchSpaceDef) -> Genome:
        """Place a graph on the padded genome via its seed-0 topological labeling"""
        index = {name: i for i, name in enumerate(space.vocab.op_names)}
        if space.space_kind == SpaceKind.OOE:
            n_slots = len(self.edge_slots(space.max_vertices))
            if graph.n != n_slots + 2 or graph.input_idx != 0 or graph.output_idx != graph.n - 1:
                raise ConfigError(f"Graph with {graph.n} vertices is not a decoded cell of this OOE space")
            return Genome(ops=tuple(index[op] for op in graph.ops[1:-1]))

        n = space.max_vertices
        if graph.n > n:
            raise ConfigError(f"Graph with {graph.n} vertices does not fit a space of {n}")
        order = self.graph_service.topological_labeling(graph, seed=0)
        adj, ops = self.graph_service.to_arrays(graph, order)
        # labels 1..n_g-2 stay in place, output moves to the last padded slot
        place = list(range(graph.n - 1)) + [n - 1]
        padded = np.zeros((n, n), dtype=np.int8)
        padded[np.ix_(place, place)] = adj
        genome_ops = [0] * (n - 2)
        for label in range(1, graph.n - 1):
            genome_ops[label - 1] = index[ops[label]]
        return Genome(ops=tuple(genome_ops), edges=tuple(int(padded[u, v]) for u, v in self.edge_slots(n)))

    def _random_genome(self, space: SearchSpaceDef, rng: np.random.Generator) -> Tuple[Genome, int]:
        """
        Uniform raw genome over the union of cell sizes, with the size it was drawn for

        A size is picked in proportion to its count of raw op/edge assignments,
        then slots outside that size stay empty.
        """
        n_ops = len(space.vocab.op_names)
        if space.space_kind == SpaceKind.OOE:
            n_slots = len(self.edge_slots(space.max_vertices))
            return Genome(ops=tuple(int(o) for o in rng.integers(n_ops, size=n_slots))), n_slots + 2
        n = space.max_vertices
        sizes = np.arange(3, n + 1)
        log_counts = (sizes - 2) * np.log(n_ops) + sizes * (sizes - 1) / 2.0 * np.log(2.0)
        weights = np.exp(log_counts - log_counts.max())
        size = int(rng.choice(sizes, p=weights / weights.sum()))

        active = set(range(size - 1)) | {n - 1}
        ops = [0] * (n - 2)
        for i, o in enumerate(rng.integers(n_ops, size=size - 2)):
            ops[i] = int(o)
        slots = self.edge_slots(n)
        live = [k for k, (u, v) in enumerate(slots) if u in active and v in active]
        edges = [0] * len(slots)
        for k, bit in zip(live, rng.integers(2, size=len(live))):
            edges[k] = int(bit)
        return Genome(ops=tuple(ops), edges=tuple(edges)), size

    def _repair(self, genome: Genome, space: SearchSpaceDef, rng: np.random.Generator) -> Tuple[Genome, ArchGraph]:
        """Toggle edges until the genome decodes to an admissible cell"""
        graph = self.decode(genome, space)
        if graph is not None:
            return genome, graph
        n = space.max_vertices
        slots = self.edge_slots(n)
        slot_index = {slot: i for i, slot in enumerate(slots)}
        edges = list(genome.edges)
        for _ in range(REPAIR_RETRIES):
            current = self.decode(Genome(ops=genome.ops, edges=tuple(edges)), space)
            if current is not None:
                return Genome(ops=genome.ops, edges=tuple(edges)), current
            on = [i for i, bit in enumerate(edges) if bit]
            if space.max_edges is not None and len(on) > space.max_edges:
                edges[on[int(rng.integers(len(on)))]] = 0
            else:
                k = int(rng.integers(1, n - 1))
                edges[slot_index[(0, k)]] = 1
                edges[slot_index[(k, n - 1)]] = 1
        raise RepairError(f"Could not repair an offspring within {REPAIR_RETRIES} edge toggles")

    # -- operators ----------------------------------------------------------

    def sample_genome(self, space: SearchSpaceDef, seed: Seed) -> Tuple[Genome, ArchGraph]:
        self._check_space(space)
        rng = _rng(seed)
        for _ in range(SAMPLE_RETRIES):
            genome, size = self._random_genome(space, rng)
            graph = self.decode(genome, space)
            # a pruned decode is a smaller cell reached from the wrong size; reject it
            if graph is not None and graph.n == size:
                return genome, graph
        raise SamplingError(f"No admissible cell after {SAMPLE_RETRIES} draws; check max_edges and max_vertices")

    def sample_random(self, space: SearchSpaceDef, seed: Seed) -> ArchGraph:
        """Rejection-sample a cell uniformly among the labeled admissible cells of every size"""
        return self.sample_genome(space, seed)[1]

    def mutate_genome(self, genome: Genome, space: SearchSpaceDef, rate: float, seed: Seed) -> Tuple[Genome, ArchGraph]:
        rng = _rng(seed)
        n_ops = len(space.vocab.op_names)
        resample = rng.random(len(genome.ops)) < rate
        fresh = rng.integers(n_ops, size=len(genome.ops))
        ops = tuple(int(f) if r else o for o, r, f in zip(genome.ops, resample, fresh))
        toggle = rng.random(len(genome.edges)) < rate
        edges = tuple(1 - e if t else e for e, t in zip(genome.edges, toggle))
        if space.space_kind == SpaceKind.OOE:
            child = Genome(ops=ops)
            return child, self.decode(child, space)
        return self._repair(Genome(ops=ops, edges=edges), space, rng)

    def mutate(self, graph: ArchGraph, space: SearchSpaceDef, rate: float, seed: Seed) -> ArchGraph:
        """
        Resample each intermediate op and toggle each edge slot with probability `rate`

        Raises:
            RepairError: if the mutant cannot be repaired
        """
        if rate <= 0.0:
            return graph
        return self.mutate_genome(self.to_genome(graph, space), space, rate, seed)[1]

    def crossover_genome(self, a: Genome, b: Genome, space: SearchSpaceDef, seed: Seed) -> Tuple[Genome, ArchGraph]:
        rng = _rng(seed)
        pick_ops = rng.random(len(a.ops)) < 0.5
        pick_edges = rng.random(len(a.edges)) < 0.5
        ops = tuple(x if p else y for x, y, p in zip(a.ops, b.ops, pick_ops))
        edges = tuple(x if p else y for x, y, p in zip(a.edges, b.edges, pick_edges))
        if space.space_kind == SpaceKind.OOE:
            child = Genome(ops=ops)
            return child, self.decode(child, space)
        return self._repair(Genome(ops=ops, edges=edges), space, rng)

    def crossover(self, a: ArchGraph, b: ArchGraph, space: SearchSpaceDef, seed: Seed) -> ArchGraph:
        """Uniform per-position op mix and per-slot edge mix of two parents, repaired"""
        return self.crossover_genome(self.to_genome(a, space), self.to_genome(b, space), space, seed)[1]

    def enumerate_space(self, space: SearchSpaceDef) -> Iterator[ArchGraph]:
        """Every distinct cell of a small space, one graph per isomorphism class"""
        self._check_space(space)
        n_ops = len(space.vocab.op_names)
        seen = set()
        if space.space_kind == SpaceKind.OOE:
            genomes: Iterator[Genome] = (
                Genome(ops=ops) for ops in product(range(n_ops), repeat=len(self.edge_slots(space.max_vertices)))
            )
        else:
            n = space.max_vertices
            genomes = (
                Genome(ops=ops, edges=edges)
                for ops in product(range(n_ops), repeat=n - 2)
                for edges in product((0, 1), repeat=len(self.edge_slots(n)))
            )
        for genome in genomes:
            graph = self.decode(genome, space)
            if graph is None:
                continue
            key = self.graph_service.canonical_key(graph)
            if key not in seen:
                seen.add(key)
                yield graph

    # -- genetic algorithm ---------------------------------------------------

    def _check_predictor(self, space: SearchSpaceDef, predictor: Predictor) -> None:
        scheme = predictor.scheme
        missing = [op for op in space.vocab.op_names if op not in scheme.vocab]
        if missing:
            raise ConfigError(f"Predictor vocabulary lacks search-space ops {missing}")
        if space.space_kind == SpaceKind.OOE:
            needed = len(self.edge_slots(space.max_vertices)) + 2
        else:
            needed = space.max_vertices
        if needed > scheme.max_vertices:
            raise ConfigError(f"Space cells reach {needed} vertices but the predictor scheme holds {scheme.max_vertices}")

    def _fingerprint(self, graph: ArchGraph, cap: Optional[int]) -> str:
        if graph.n <= self.graph_service.brute_force_limit:
            return self.graph_service.canonical_key(graph)
        return self.graph_service.canonical_key(graph, cap=cap or 1)

    @staticmethod
    def _tournament(fitness: Sequence[float], size: int, rng: np.random.Generator) -> int:
        entrants = rng.integers(len(fitness), size=size)
        best = int(entrants[0])
        for e in entrants[1:]:
            e = int(e)
            if fitness[e] > fitness[best] or (fitness[e] == fitness[best] and e < best):
                best = e
        return best

    def run_search(
        self,
        space: SearchSpaceDef,
        predictor: Optional[Predictor],
        config: GaConfig,
        fitness: Optional[Fitness] = None,
    ) -> SearchResult:
        """
        Tournament selection, uniform crossover, per-gene mutation and elitism

        Fitness defaults to the predictor's aug_mean prediction capped at
        config.fitness_cap labelings; `fitness` replaces it with any scorer.
        The best-ever individual is returned; history holds generations + 1
        rows, the first for the initial population.

        Raises:
            ConfigError: no fitness source, or a predictor that does not cover the space
        """
        self._check_space(space)
        if fitness is None:
            if predictor is None or self.predictor_service is None:
                raise ConfigError("run_search needs a predictor or an explicit fitness function")
            self._check_predictor(space, predictor)

            def fitness(graph: ArchGraph) -> float:
                return self.predictor_service.predict_architecture(
                    predictor, graph, mode="aug_mean", cap=config.fitness_cap, seed=0
                )

        cache: Dict[str, float] = {}

        def evaluate(graphs: List[ArchGraph]) -> List[float]:
            keys = [self._fingerprint(g, config.fitness_cap) for g in graphs]
            todo: Dict[str, ArchGraph] = {}
            for key, g in zip(keys, graphs):
                if key not in cache and key not in todo:
                    todo[key] = g
            if todo:
                items = list(todo.items())
                if self.threads == 1:
                    values = [fitness(g) for _, g in items]
                else:
                    with ThreadPoolExecutor(max_workers=self.threads) as executor:
                        values = list(executor.map(lambda item: fitness(item[1]), items))
                for (key, _), value in zip(items, values):
                    cache[key] = float(value)
            return [cache[k] for k in keys]

        generation_seeds = np.random.SeedSequence(config.seed).spawn(config.generations + 1)

        streams = generation_seeds[0].spawn(config.population)
        individuals = [self.sample_genome(space, np.random.default_rng(s)) for s in streams]
        genomes = [g for g, _ in individuals]
        graphs = [g for _, g in individuals]
        scores = evaluate(graphs)

        best_index = int(np.argmax(scores))
        best_graph, best_score = graphs[best_index], scores[best_index]
        history = [GenerationStats(generation=0, best=max(scores), mean=float(np.mean(scores)), best_ever=best_score)]
        logger.info(f"Generation 0: best={max(scores):.6f} mean={np.mean(scores):.6f}")

        for generation in range(1, config.generations + 1):
            selection_seed, *child_seeds = generation_seeds[generation].spawn(config.population + 1)
            selection = np.random.default_rng(selection_seed)

            ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
            new_genomes = [genomes[i] for i in ranked[: config.elitism]]
            new_graphs = [graphs[i] for i in ranked[: config.elitism]]
            taken = {self._fingerprint(g, config.fitness_cap) for g in new_graphs}

            for child_seed in child_seeds[: config.population - config.elitism]:
                rng = np.random.default_rng(child_seed)
                a = self._tournament(scores, config.tournament_size, selection)
                b = self._tournament(scores, config.tournament_size, selection)
                if rng.random() < config.crossover_rate:
                    genome, graph = self.crossover_genome(genomes[a], genomes[b], space, rng)
                else:
                    genome, graph = genomes[a], graphs[a]
                genome, graph = self.mutate_genome(genome, space, config.mutation_rate, rng)
                key = self._fingerprint(graph, config.fitness_cap)
                if key in taken:
                    # one extra mutation to keep the population diverse
                    genome, graph = self.mutate_genome(genome, space, max(config.mutation_rate, 0.1), rng)
                    key = self._fingerprint(graph, config.fitness_cap)
                taken.add(key)
                new_genomes.append(genome)
                new_graphs.append(graph)

            genomes, graphs = new_genomes, new_graphs
            scores = evaluate(graphs)
            top = int(np.argmax(scores))
            if scores[top] > best_score:
                best_graph, best_score = graphs[top], scores[top]
            history.append(
                GenerationStats(generation=generation, best=max(scores), mean=float(np.mean(scores)), best_ever=best_score)
            )
            logger.info(f"Generation {generation}: best={max(scores):.6f} mean={np.mean(scores):.6f} best_ever={best_score:.6f}")

        return SearchResult(best_graph=best_graph, predicted_score=best_score, history=history, evaluations=len(cache))
