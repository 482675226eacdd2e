import hashlib
from enum import Enum
from typing import Any, Dict

from pydantic import BaseModel, ConfigDict, Field

from models.graph import OpVocabulary
from utils.io import dump_json


class SchemeKind(str, Enum):
    GIAUG_OON = "giaug_oon"
    RENAS_BASELINE = "renas_baseline"


class EncodingScheme(BaseModel):
    """How graphs become fixed-width vectors: kind, padding size and vocabulary"""
    model_config = ConfigDict(frozen=True)

    kind: SchemeKind = SchemeKind.GIAUG_OON
    max_vertices: int = Field(ge=2)
    vocab: OpVocabulary

    @property
    def width(self) -> int:
        n = self.max_vertices
        if self.kind == SchemeKind.GIAUG_OON:
            return n * n + n * self.vocab.size
        return n * n

    def to_descriptor(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "max_vertices": self.max_vertices,
            "vocab": list(self.vocab.tokens),
        }

    @classmethod
    def from_descriptor(cls, obj: Dict[str, Any]) -> "EncodingScheme":
        return cls(
            kind=SchemeKind(obj["kind"]),
            max_vertices=int(obj["max_vertices"]),
            vocab=OpVocabulary(tokens=tuple(obj["vocab"])),
        )

    def fingerprint(self) -> str:
        """SHA-256 of the canonical descriptor JSON"""
        return hashlib.sha256(dump_json(self.to_descriptor()).encode("utf-8")).hexdigest()

    def with_kind(self, kind: SchemeKind) -> "EncodingScheme":
        return EncodingScheme(kind=kind, max_vertices=self.max_vertices, vocab=self.vocab)
