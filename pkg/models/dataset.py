from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.encoding import EncodingScheme
from models.graph import ArchGraph, OpVocabulary


class SpaceKind(str, Enum):
    OON = "oon"
    OOE = "ooe"


class DatasetRecord(BaseModel):
    """One annotated architecture"""
    model_config = ConfigDict(frozen=True)

    id: str
    graph: ArchGraph
    performance: float = Field(ge=0.0, le=1.0)

    def to_json(self) -> Dict[str, Any]:
        return {"id": self.id, "graph": self.graph.to_json(), "performance": self.performance}


class AnnotatedDataset(BaseModel):
    """Annotated architectures [X, y] with their operation vocabulary"""
    model_config = ConfigDict(frozen=True)

    records: Tuple[DatasetRecord, ...]
    vocab: OpVocabulary
    space_kind: SpaceKind = SpaceKind.OON
    max_vertices: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_ids(self) -> "AnnotatedDataset":
        seen = set()
        for record in self.records:
            if record.id in seen:
                raise ValueError(f"Duplicate record id {record.id!r}")
            seen.add(record.id)
        return self

    def __len__(self) -> int:
        return len(self.records)

    def subset(self, indices: List[int]) -> "AnnotatedDataset":
        return AnnotatedDataset(
            records=tuple(self.records[i] for i in indices),
            vocab=self.vocab,
            space_kind=self.space_kind,
            max_vertices=self.max_vertices,
        )

    def meta(self) -> Dict[str, Any]:
        return {
            "space_kind": self.space_kind.value,
            "max_vertices": self.max_vertices,
            "vocab": list(self.vocab.tokens),
        }


@dataclass(frozen=True)
class AugmentedRecord:
    """Encoded relabeling of a source architecture, carrying the source's label"""
    encoding: np.ndarray
    performance: float
    source_id: str
    labeling_rank: int = 0

    def to_json(self) -> Dict[str, Any]:
        return {
            "source_id": self.source_id,
            "encoding": [float(x) for x in self.encoding],
            "performance": self.performance,
        }


class AugmentationStats(BaseModel):
    """Counters reported by augment_dataset"""
    candidates: int = 0
    unique: int = 0
    conflicts: int = 0
    per_source_candidates: Dict[str, int] = {}
    per_source_unique: Dict[str, int] = {}


@dataclass
class AugmentedDataset:
    """Deduplicated augmented records in (source, labeling rank) order"""
    records: List[AugmentedRecord]
    scheme: EncodingScheme
    stats: AugmentationStats = field(default_factory=AugmentationStats)

    def __len__(self) -> int:
        return len(self.records)

    def features(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, self.scheme.width), dtype=np.float64)
        return np.vstack([r.encoding for r in self.records]).astype(np.float64)

    def targets(self) -> np.ndarray:
        return np.array([r.performance for r in self.records], dtype=np.float64)


class SyntheticSpaceSpec(BaseModel):
    """Random-cell benchmark whose score depends only on isomorphism-invariant features"""
    n_intermediate: int = Field(ge=1)
    vocab: List[str] = Field(min_length=1)
    edge_density: float = Field(gt=0.0, le=1.0)
    # one weight per op type, then edge count, longest path, max in-degree
    score_weights: List[float]
    bias: float = 0.0
    noise_sigma: float = Field(default=0.0, ge=0.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_weights(self) -> "SyntheticSpaceSpec":
        expected = len(self.vocab) + 3
        if len(self.score_weights) != expected:
            raise ValueError(
                f"score_weights needs {expected} entries (one per op, edges, longest path, max in-degree), "
                f"got {len(self.score_weights)}"
            )
        if len(set(self.vocab)) != len(self.vocab):
            raise ValueError("vocab names must be unique")
        return self
