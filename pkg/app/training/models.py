from sqlalchemy import Column, Integer, String, ForeignKey, DateTime, func, JSON, Enum
from sqlalchemy.orm import relationship
from app.core.database import Base
import enum

class RunStatus(enum.Enum):
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"

class Run(Base):
    __tablename__ = "runs"
    id = Column(Integer, primary_key=True, index=True)
    command = Column(String, index=True)  # "train", "pretrain nt", "sweep", ...
    config_hash = Column(String, index=True)
    seed = Column(Integer, nullable=False)
    status = Column(Enum(RunStatus), default=RunStatus.RUNNING)
    metrics = Column(JSON, nullable=True)  # MetricsReport sem tempos
    timings = Column(JSON, nullable=True)
    error = Column(String, nullable=True)
    created_at = Column(DateTime(timezone=True), server_default=func.now(), nullable=False)
    finished_at = Column(DateTime(timezone=True), nullable=True)
    checkpoints = relationship("Checkpoint", back_populates="run", cascade="all, delete-orphan")

class Checkpoint(Base):
    __tablename__ = "checkpoints"
    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("runs.id"))
    group = Column(String, index=True)  # "phi", "theta", "psi", "classifier"
    path = Column(String)
    sha256 = Column(String)
    created_at = Column(DateTime(timezone=True), server_default=func.now(), nullable=False)

    run = relationship("Run", back_populates="checkpoints")
