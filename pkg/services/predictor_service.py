import os
import math
import logging
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from models.dataset import AugmentedDataset, AugmentedRecord
from models.encoding import EncodingScheme
from models.graph import ArchGraph
from models.predictor import ModelKind, Predictor, TrainConfig
from services.augmentation_service import AugmentationService
from services.encoding_service import EncodingService
from services.regression_models import DecisionTreeRegressor, KNeighborsRegressor, RandomForestRegressor
from utils.errors import EmptyTrainError, ParseError, RangeError, VersionError, WidthMismatchError
from utils.io import read_json, write_json_atomic

logger = logging.getLogger(__name__)

MODEL_FILE_VERSION = 1


class PredictorService:
    """Service for fitting, applying and persisting performance predictors"""

    def __init__(self, encoding_service: EncodingService, augmentation_service: AugmentationService, threads: int = 1):
        self.encoding_service = encoding_service
        self.augmentation_service = augmentation_service
        self.threads = max(1, threads)

    def fit(
        self,
        train: Union[AugmentedDataset, Sequence[AugmentedRecord]],
        scheme: EncodingScheme,
        config: TrainConfig,
    ) -> Predictor:
        """
        Fit the configured regressor on encoded records under the MSE objective

        Raises:
            EmptyTrainError: no records
            WidthMismatchError: an encoding width differs from the scheme width
        """
        records = train.records if isinstance(train, AugmentedDataset) else list(train)
        if not records:
            raise EmptyTrainError("Cannot fit a predictor on zero records")
        for record in records:
            if record.encoding.shape != (scheme.width,):
                raise WidthMismatchError(
                    f"Record from {record.source_id} has width {record.encoding.size}, scheme width is {scheme.width}"
                )

        X = np.vstack([r.encoding for r in records]).astype(np.float64)
        y = np.array([r.performance for r in records], dtype=np.float64)

        if config.model_kind == ModelKind.RF:
            model: Any = RandomForestRegressor(
                n_trees=config.rf_trees,
                feature_fraction=config.rf_feature_fraction,
                min_samples_split=config.rf_min_samples_split,
                seed=config.seed,
                threads=self.threads,
            ).fit(X, y)
        elif config.model_kind == ModelKind.DT:
            model = DecisionTreeRegressor(max_depth=config.dt_max_depth).fit(X, y)
        else:
            model = KNeighborsRegressor(k=config.knn_k).fit(X, y)

        logger.info(f"Fitted {config.model_kind.value} on {len(y)} samples of width {scheme.width}")
        return Predictor(
            kind=config.model_kind,
            model=model,
            scheme=scheme,
            config=config,
            train_meta={"samples": len(y), "seed": config.seed, "width": scheme.width},
        )

    def predict(self, predictor: Predictor, encodings: Union[np.ndarray, Sequence[np.ndarray]]) -> np.ndarray:
        """One predicted performance per encoding"""
        if len(encodings) == 0:
            return np.zeros(0, dtype=np.float64)
        X = np.asarray(encodings, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != predictor.scheme.width:
            raise WidthMismatchError(
                f"Encodings of shape {X.shape} do not match scheme width {predictor.scheme.width}"
            )
        return predictor.model.predict(X)

    def predict_architecture(
        self,
        predictor: Predictor,
        graph: ArchGraph,
        mode: str = "single",
        cap: Optional[int] = None,
        seed: int = 0,
    ) -> float:
        """
        Predict one architecture

        `single` encodes the canonical labeling (the seed-0 topological order
        above the brute-force limit); `aug_mean` averages over every (capped)
        input/output-fixing relabeling of the seeded topological labeling.
        Uncapped, both are independent of how the graph was numbered.
        """
        scheme = predictor.scheme
        if mode == "single":
            return float(self.predict(predictor, [self.encoding_service.encode_canonical(graph, scheme)])[0])
        if mode != "aug_mean":
            raise RangeError(f"Unknown prediction mode {mode!r}; use single or aug_mean")
        matrix = self.augmentation_service.candidate_matrix(graph, scheme, cap, seed)
        values = self.predict(predictor, matrix)
        return math.fsum(values.tolist()) / len(values)

    # -- persistence ------------------------------------------------------

    def to_json(self, predictor: Predictor) -> Dict[str, Any]:
        if predictor.kind == ModelKind.KNN:
            body: Dict[str, Any] = {"knn": predictor.model.to_json()}
        elif predictor.kind == ModelKind.RF:
            body = predictor.model.to_json()
        else:
            body = {"trees": [predictor.model.to_json()]}
        return {
            "version": MODEL_FILE_VERSION,
            "kind": predictor.kind.value,
            "scheme": predictor.scheme.to_descriptor(),
            "scheme_fingerprint": predictor.scheme_fingerprint,
            "train_meta": predictor.train_meta,
            "config": predictor.config.model_dump(mode="json"),
            **body,
        }

    def save(self, predictor: Predictor, path: str) -> None:
        try:
            write_json_atomic(path, self.to_json(predictor), indent=None)
            logger.info(f"Saved {predictor.kind.value} model to {path}")
        except Exception as e:
            logger.error(f"Error saving model to {path}: {str(e)}")
            raise

    def load(self, path: str, expected_scheme: Optional[EncodingScheme] = None) -> Predictor:
        """
        Load a model file

        Raises:
            FileNotFoundError: missing file
            ParseError: truncated or malformed file
            VersionError: unsupported version, or a scheme fingerprint that does
                not match the stored scheme or `expected_scheme`
        """
        if not os.path.exists(path):
            raise FileNotFoundError(f"Model file not found: {path}")
        obj = read_json(path)
        if not isinstance(obj, dict):
            raise ParseError(f"{path}: model file must hold a JSON object")
        if obj.get("version") != MODEL_FILE_VERSION:
            raise VersionError(f"{path}: model version {obj.get('version')!r} is not supported (expected {MODEL_FILE_VERSION})")

        try:
            scheme = EncodingScheme.from_descriptor(obj["scheme"])
            kind = ModelKind(obj["kind"])
            config = TrainConfig.model_validate(obj["config"])
            fingerprint = obj["scheme_fingerprint"]
        except (KeyError, ValueError, PydanticValidationError) as e:
            raise ParseError(f"{path}: invalid model header: {str(e)}")

        if fingerprint != scheme.fingerprint():
            raise VersionError(f"{path}: scheme fingerprint does not match the stored scheme descriptor")
        if expected_scheme is not None and fingerprint != expected_scheme.fingerprint():
            raise VersionError(f"{path}: model was trained on a different encoding scheme")

        try:
            if kind == ModelKind.KNN:
                model: Any = KNeighborsRegressor.from_json(obj["knn"])
            elif kind == ModelKind.RF:
                model = RandomForestRegressor.from_json(obj)
                model.seed = config.seed
            else:
                trees: List[Dict[str, Any]] = obj["trees"]
                if len(trees) != 1:
                    raise ParseError(f"{path}: a decision-tree model holds exactly one tree")
                model = DecisionTreeRegressor.from_json(trees[0])
        except KeyError as e:
            raise ParseError(f"{path}: missing field {e.args[0]!r}")

        logger.info(f"Loaded {kind.value} model from {path}")
        return Predictor(kind=kind, model=model, scheme=scheme, config=config, train_meta=dict(obj.get("train_meta", {})))
