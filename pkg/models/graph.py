from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

INPUT = "input"
OUTPUT = "output"
PAD_NULL = "null"
RESERVED_TOKENS = (INPUT, OUTPUT, PAD_NULL)


class Violation(str, Enum):
    """ArchGraph invariants, in the order validate() checks them"""
    STRUCTURE = "structure"
    CYCLE = "cycle"
    INPUT_IN_DEGREE = "input_in_degree"
    OUTPUT_OUT_DEGREE = "output_out_degree"
    IO_TOKENS = "io_tokens"
    UNREACHABLE = "unreachable_vertex"


class ValidationReport(BaseModel):
    """Outcome of validate(): pass, or the first violated invariant"""
    model_config = ConfigDict(frozen=True)

    ok: bool
    violation: Optional[Violation] = None
    message: str = ""


class ArchGraph(BaseModel):
    """Directed attributed graph of a cell; ops[i] is the operation of vertex i"""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    n: int = Field(ge=1)
    edges: Tuple[Tuple[int, int], ...] = ()
    ops: Tuple[str, ...]
    input_idx: int = Field(alias="input")
    output_idx: int = Field(alias="output")

    @field_validator("edges", mode="before")
    @classmethod
    def _normalize_edges(cls, value: Any) -> Tuple[Tuple[int, int], ...]:
        # edges form a set: duplicates collapse, order is canonical
        return tuple(sorted({(int(u), int(v)) for u, v in value}))

    def successors(self) -> List[List[int]]:
        out: List[List[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            if 0 <= u < self.n and 0 <= v < self.n:
                out[u].append(v)
        return out

    def predecessors(self) -> List[List[int]]:
        out: List[List[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            if 0 <= u < self.n and 0 <= v < self.n:
                out[v].append(u)
        return out

    def to_json(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "edges": [list(e) for e in self.edges],
            "ops": list(self.ops),
            "input": self.input_idx,
            "output": self.output_idx,
        }

    @classmethod
    def from_json(cls, obj: Dict[str, Any]) -> "ArchGraph":
        return cls.model_validate(obj)


class OoeGraph(BaseModel):
    """Operation-on-edge cell: vertices are join points, every edge carries an op"""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    n: int = Field(ge=2)
    op_edges: Tuple[Tuple[int, int, str], ...]
    input_idx: int = Field(alias="input")
    output_idx: int = Field(alias="output")

    def to_json(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "op_edges": [[u, v, op] for u, v, op in self.op_edges],
            "input": self.input_idx,
            "output": self.output_idx,
        }


class OpToken(BaseModel):
    """Operation name with its position in a vocabulary"""
    model_config = ConfigDict(frozen=True)

    id: int = Field(ge=0)
    name: str


class OpVocabulary(BaseModel):
    """Ordered operation names; the order defines one-hot columns and integer ids"""
    model_config = ConfigDict(frozen=True)

    tokens: Tuple[str, ...]

    @model_validator(mode="after")
    def _check_tokens(self) -> "OpVocabulary":
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError(f"Vocabulary names must be unique: {list(self.tokens)}")
        missing = [t for t in RESERVED_TOKENS if t not in self.tokens]
        if missing:
            raise ValueError(f"Vocabulary is missing reserved tokens {missing}")
        return self

    @classmethod
    def from_ops(cls, op_names: Sequence[str]) -> "OpVocabulary":
        """input, output, the sorted intermediate op names, then null"""
        ops = sorted({name for name in op_names if name not in RESERVED_TOKENS})
        return cls(tokens=(INPUT, OUTPUT, *ops, PAD_NULL))

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def op_names(self) -> Tuple[str, ...]:
        """Names usable on intermediate vertices"""
        return tuple(t for t in self.tokens if t not in RESERVED_TOKENS)

    def index(self) -> Dict[str, int]:
        return {name: i for i, name in enumerate(self.tokens)}

    def __contains__(self, name: object) -> bool:
        return name in self.tokens

    def token(self, name: str) -> OpToken:
        from utils.errors import VocabularyError

        try:
            return OpToken(id=self.tokens.index(name), name=name)
        except ValueError:
            raise VocabularyError(f"Unknown operation {name!r}; vocabulary is {list(self.tokens)}")


class AdjacencyMatrix(BaseModel):
    """n x n binary matrix; entries[i][j] == 1 iff edge (i -> j) exists"""
    model_config = ConfigDict(frozen=True)

    entries: Tuple[Tuple[int, ...], ...]

    @model_validator(mode="after")
    def _check_entries(self) -> "AdjacencyMatrix":
        n = len(self.entries)
        for row in self.entries:
            if len(row) != n:
                raise ValueError("Adjacency matrix must be square")
            if any(x not in (0, 1) for x in row):
                raise ValueError("Adjacency matrix entries must be 0 or 1")
        return self

    @property
    def n(self) -> int:
        return len(self.entries)

    def array(self) -> np.ndarray:
        return np.array(self.entries, dtype=np.int8).reshape(self.n, self.n)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "AdjacencyMatrix":
        return cls(entries=tuple(tuple(int(x) for x in row) for row in np.asarray(arr)))


class AttributeVector(BaseModel):
    """values[i] is the operation of the vertex labeled i"""
    model_config = ConfigDict(frozen=True)

    values: Tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.values)


class PermutationMatrix(BaseModel):
    """Square binary matrix with exactly one 1 per row and per column"""
    model_config = ConfigDict(frozen=True)

    entries: Tuple[Tuple[int, ...], ...]

    @model_validator(mode="after")
    def _check_entries(self) -> "PermutationMatrix":
        arr = np.array(self.entries, dtype=np.int64).reshape(len(self.entries), -1)
        n = arr.shape[0]
        if arr.shape != (n, n) or not np.isin(arr, (0, 1)).all():
            raise ValueError("Permutation matrix must be square and binary")
        if not (arr.sum(axis=0) == 1).all() or not (arr.sum(axis=1) == 1).all():
            raise ValueError("Permutation matrix needs exactly one 1 per row and column")
        return self

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def labeling(self) -> Tuple[int, ...]:
        """l with P[i][l[i]] == 1"""
        return tuple(row.index(1) for row in self.entries)

    def array(self) -> np.ndarray:
        return np.array(self.entries, dtype=np.int64).reshape(self.n, self.n)

    def inverse(self) -> "PermutationMatrix":
        return PermutationMatrix(entries=tuple(zip(*self.entries)))

    @classmethod
    def from_labeling(cls, labeling: Sequence[int]) -> "PermutationMatrix":
        n = len(labeling)
        rows = []
        for i in range(n):
            row = [0] * n
            row[labeling[i]] = 1
            rows.append(tuple(row))
        return cls(entries=tuple(rows))

    @classmethod
    def identity(cls, n: int) -> "PermutationMatrix":
        return cls.from_labeling(list(range(n)))
