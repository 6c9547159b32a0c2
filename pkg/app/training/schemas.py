from pydantic import BaseModel, Field
from typing import List, Optional, Dict
from datetime import datetime

from .models import RunStatus


class CoverageCounts(BaseModel):
    total: int = 0
    usable: int = 0
    skipped: List[str] = []


class CurvePoint(BaseModel):
    x: float
    metric: float = Field(ge=0.0, le=1.0)


class AblationRow(BaseModel):
    name: str
    pretrain_accuracy: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    hits_at_1_all: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    hits_at_1_ordinal: Optional[float] = Field(default=None, ge=0.0, le=1.0)


class MetricsReport(BaseModel):
    """Relatório de métricas; tempos de relógio ficam no TimingsReport."""
    config_hash: str = ""
    seed: int = 0
    questions: int = 0
    ordinal_questions: int = 0
    hits_at_1_all: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    hits_at_1_ordinal: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    hits_at_1_non_ordinal: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    pretrain_accuracy: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    fallback_questions: int = 0
    truncated_inputs: int = 0
    coverage: Optional[CoverageCounts] = None
    curves: Dict[str, List[CurvePoint]] = {}
    ablations: List[AblationRow] = []


class TimingsReport(BaseModel):
    stages: Dict[str, float] = {}
    # eixo da varredura -> segundos por ponto da grade
    sweeps: Dict[str, List[float]] = {}
    # segundos por época, por estágio
    epochs: Dict[str, List[float]] = {}


class CheckpointEntry(BaseModel):
    file: str
    sha256: str
    config_hash: str = ""


class CheckpointManifest(BaseModel):
    config_hash: str
    seed: int
    groups: Dict[str, CheckpointEntry] = {}


class RunOut(BaseModel):
    id: int
    command: str
    config_hash: str
    seed: int
    status: Optional[RunStatus] = None
    metrics: Optional[Dict] = None
    created_at: Optional[datetime] = None
    finished_at: Optional[datetime] = None

    class Config:
        from_attributes = True
