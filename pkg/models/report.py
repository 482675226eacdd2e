from typing import Any, Dict, List, Optional

from pydantic import BaseModel


class MetricsReport(BaseModel):
    tau_paper: float
    tau_b: Optional[float] = None
    n_at_k: Dict[str, int] = {}
    n_test: int


class AblationRow(BaseModel):
    """Aggregated result of one ablation case over all seeds"""
    case: int
    encoding: str
    augmented: bool
    tau_mean: float
    tau_std: float
    tau_b_mean: Optional[float] = None
    n_at_k_mean: Dict[str, float] = {}
    taus: List[float] = []


class RunManifest(BaseModel):
    """Written next to every output artifact"""
    command: str
    config: Dict[str, Any] = {}
    seeds: List[int] = []
    inputs: Dict[str, str] = {}
    outputs: Dict[str, str] = {}
    tool_version: str
    wall_time_seconds: float
