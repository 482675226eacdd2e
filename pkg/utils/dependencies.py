from dataclasses import dataclass
from typing import Optional

from services.ablation_service import AblationService
from services.augmentation_service import AugmentationService
from services.dataset_service import DatasetService
from services.encoding_service import EncodingService
from services.graph_service import GraphService
from services.metrics_service import MetricsService
from services.predictor_service import PredictorService
from services.search_service import SearchService
from utils.settings import Settings, get_settings


@dataclass
class Services:
    graph: GraphService
    encoding: EncodingService
    augmentation: AugmentationService
    dataset: DatasetService
    predictor: PredictorService
    metrics: MetricsService
    search: SearchService
    ablation: AblationService


def get_services(settings: Optional[Settings] = None, threads: Optional[int] = None) -> Services:
    """Wire a fresh set of services; `threads` overrides the settings value"""
    settings = settings or get_settings()
    workers = threads if threads is not None else settings.threads

    graph = GraphService(brute_force_limit=settings.brute_force_limit)
    encoding = EncodingService(graph)
    augmentation = AugmentationService(graph, encoding, threads=workers)
    dataset = DatasetService(graph, encoding)
    predictor = PredictorService(encoding, augmentation, threads=workers)
    return Services(
        graph=graph,
        encoding=encoding,
        augmentation=augmentation,
        dataset=dataset,
        predictor=predictor,
        metrics=MetricsService(),
        search=SearchService(graph, encoding, predictor, threads=workers),
        ablation=AblationService(dataset, augmentation, predictor),
    )
