from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.dataset import SpaceKind
from models.graph import ArchGraph, OpVocabulary


class SearchSpaceDef(BaseModel):
    """Cells a search may visit.

    For OON spaces max_vertices bounds the cell size including input/output;
    for OOE spaces it is the number of join nodes, every edge of the complete
    DAG over them carrying one operation.
    """
    model_config = ConfigDict(frozen=True)

    max_vertices: int = Field(ge=2)
    vocab: OpVocabulary
    max_edges: Optional[int] = Field(default=None, ge=1)
    space_kind: SpaceKind = SpaceKind.OON


class GaConfig(BaseModel):
    population: int = Field(default=100, ge=2)
    generations: int = Field(default=50, ge=0)
    tournament_size: int = Field(default=2, ge=1)
    mutation_rate: float = Field(default=0.1, ge=0.0, le=1.0)
    crossover_rate: float = Field(default=0.9, ge=0.0, le=1.0)
    elitism: int = Field(default=2, ge=0)
    fitness_cap: Optional[int] = Field(default=24, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_elitism(self) -> "GaConfig":
        if self.elitism >= self.population:
            raise ValueError(f"elitism ({self.elitism}) must be smaller than population ({self.population})")
        return self


class GenerationStats(BaseModel):
    generation: int
    best: float
    mean: float
    best_ever: float


class SearchResult(BaseModel):
    best_graph: ArchGraph
    predicted_score: float
    history: List[GenerationStats]
    evaluations: int = 0
