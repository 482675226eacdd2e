import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.dataset import AnnotatedDataset
from models.encoding import EncodingScheme, SchemeKind
from models.predictor import TrainConfig
from models.report import AblationRow
from services.augmentation_service import AugmentationService, record_seed
from services.dataset_service import DatasetService
from services.metrics_service import kendall_tau, n_at_k
from services.predictor_service import PredictorService

logger = logging.getLogger(__name__)

# (case, encoding, augmented)
ABLATION_CASES: Tuple[Tuple[int, SchemeKind, bool], ...] = (
    (1, SchemeKind.RENAS_BASELINE, False),
    (2, SchemeKind.GIAUG_OON, False),
    (3, SchemeKind.RENAS_BASELINE, True),
    (4, SchemeKind.GIAUG_OON, True),
)

# test graphs are labeled from a stream disjoint from the training one
TEST_LABELING_OFFSET = 1_000_003


class AblationService:
    """Encoding x augmentation ablation over repeated seeded splits"""

    def __init__(
        self,
        dataset_service: DatasetService,
        augmentation_service: AugmentationService,
        predictor_service: PredictorService,
    ):
        self.dataset_service = dataset_service
        self.augmentation_service = augmentation_service
        self.predictor_service = predictor_service

    def run_seed(
        self,
        dataset: AnnotatedDataset,
        fraction: float,
        seed: int,
        config: TrainConfig,
        cap: Optional[int] = None,
        ks: Sequence[int] = (5, 10),
    ) -> Dict[int, Dict[str, float]]:
        """Metrics of the four cases for one split"""
        train, test = self.dataset_service.split(dataset, fraction, seed)
        base = EncodingScheme(kind=SchemeKind.GIAUG_OON, max_vertices=dataset.max_vertices, vocab=dataset.vocab)
        actual = np.array([r.performance for r in test.records], dtype=np.float64)
        encoder = self.predictor_service.encoding_service
        seed_config = config.model_copy(update={"seed": seed})

        results: Dict[int, Dict[str, float]] = {}
        for case, kind, augmented in ABLATION_CASES:
            scheme = base.with_kind(kind)
            train_set = self.augmentation_service.augment_dataset(train, scheme, cap=cap if augmented else 1, seed=seed)
            predictor = self.predictor_service.fit(train_set, scheme, seed_config)
            probes = np.vstack([
                encoder.encode_graph(r.graph, scheme, record_seed(seed + TEST_LABELING_OFFSET, i))
                for i, r in enumerate(test.records)
            ])
            predicted = self.predictor_service.predict(predictor, probes)
            metrics = {
                "tau_paper": kendall_tau(predicted, actual, "paper"),
                "tau_b": kendall_tau(predicted, actual, "tau_b"),
            }
            for k in ks:
                metrics[f"n@{k}"] = float(n_at_k(predicted, actual, min(k, len(actual))))
            results[case] = metrics
            logger.info(
                f"seed={seed} case={case} ({kind.value}, augmented={augmented}): "
                f"train={len(train_set)} tau={metrics['tau_paper']:.4f}"
            )
        return results

    def run(
        self,
        dataset: AnnotatedDataset,
        fraction: float,
        seeds: Sequence[int],
        config: TrainConfig,
        cap: Optional[int] = None,
        ks: Sequence[int] = (5, 10),
    ) -> List[AblationRow]:
        """
        Train and evaluate every case for every seed; rows hold mean/std Tau over seeds

        Cases: 1 baseline encoding, 2 proposed encoding, 3 baseline encoding
        with augmentation, 4 proposed encoding with augmentation.
        """
        per_seed = [self.run_seed(dataset, fraction, seed, config, cap, ks) for seed in seeds]
        rows = []
        for case, kind, augmented in ABLATION_CASES:
            taus = [r[case]["tau_paper"] for r in per_seed]
            tau_b = np.array([r[case]["tau_b"] for r in per_seed], dtype=np.float64)
            rows.append(AblationRow(
                case=case,
                encoding=kind.value,
                augmented=augmented,
                tau_mean=float(np.mean(taus)),
                tau_std=float(np.std(taus)),
                tau_b_mean=None if np.isnan(tau_b).all() else float(np.nanmean(tau_b)),
                n_at_k_mean={str(k): float(np.mean([r[case][f"n@{k}"] for r in per_seed])) for k in ks},
                taus=taus,
            ))
        return rows
