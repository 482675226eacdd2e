from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Literal, Optional

from pydantic import BaseModel, Field

from models.encoding import EncodingScheme


class ModelKind(str, Enum):
    RF = "rf"
    DT = "dt"
    KNN = "knn"


class TrainConfig(BaseModel):
    """Regressor hyperparameters; defaults follow the random-forest setup of the benchmark study"""
    model_kind: ModelKind = ModelKind.RF
    rf_trees: int = Field(default=230, ge=1)
    # None selects ceil(sqrt(d)) features per split
    rf_feature_fraction: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    rf_min_samples_split: int = Field(default=2, ge=2)
    dt_max_depth: Optional[int] = Field(default=None, ge=1)
    knn_k: int = Field(default=5, ge=1)
    loss: Literal["mse"] = "mse"
    seed: int = 0


@dataclass
class Predictor:
    """Trained regressor bound to the encoding scheme it was fitted on"""
    kind: ModelKind
    model: Any
    scheme: EncodingScheme
    config: TrainConfig
    train_meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def scheme_fingerprint(self) -> str:
        return self.scheme.fingerprint()
