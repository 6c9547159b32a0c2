"""
Orquestração dos estágios de treino sobre os arquivos de dados e o
registro de execuções no banco.
"""
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

from sqlalchemy import desc
from sqlalchemy.orm import Session

from app.core.config import Settings
from app.core.exceptions import PipelineError
from app.core.nn import ParameterGroup, seed_everything
from app.datagen.determiners import DETERMINERS
from app.datagen.models import PretrainInstance, QGNDReport
from app.datagen.schemas import PretrainRecord, QARecord, read_jsonl, write_jsonl
from app.datagen.services import (
    CORPUS_FACTOID,
    CORPUS_ORDINAL,
    TEMPLATE,
    gen_augmented,
    gen_qa_corpus,
    gen_qgnd,
    gen_qind,
    split_records,
)
from app.datagen.synthetic_kb import gen_synthetic_kb
from app.encoders.services import FrozenTextEncoder
from app.encoders.vocab import Vocabulary, build_vocabulary
from app.kb.models import KnowledgeBase
from app.kb.normalize import load_unit_table
from app.kb.schemas import UnitTable
from app.kb.services import RELATIONS_FILE, TRIPLES_FILE, UNITS_FILE, load_kb, write_kb
from app.reasoning.context import PreparedQuestion, prepare_question
from app.reasoning.model import NTNSM
from . import models
from .checkpoints import load_checkpoints, save_checkpoints
from .pipeline import evaluate, train_full
from .pretrain import evaluate_pretrain, pretrain_basic, pretrain_nt, train_classifier
from .schemas import CheckpointManifest, CoverageCounts, MetricsReport, TimingsReport

logger = logging.getLogger(__name__)

# Semente fixa do codificador congelado: não muda com a semente de treino
ENCODER_SEED = 0


@dataclass(frozen=True)
class DataPaths:
    root: Path

    @property
    def kb_dir(self) -> Path:
        return self.root / "kb"

    @property
    def qa(self) -> Path:
        return self.root / "qa.jsonl"

    @property
    def qind(self) -> Path:
        return self.root / "qind.jsonl"

    @property
    def qgnd(self) -> Path:
        return self.root / "qgnd.jsonl"

    @property
    def augmented(self) -> Path:
        return self.root / "augmented.jsonl"

    @property
    def vocab(self) -> Path:
        return self.root / "vocab.txt"


class Experiment:
    """
    Estado compartilhado de uma execução: configuração, KB, codificador
    congelado e tempos por estágio. KB e codificador são carregados uma vez.
    """

    def __init__(self, config: Settings):
        self.config = config
        self.paths = DataPaths(Path(config.data_dir))
        self.timings = TimingsReport()
        self._kb: Optional[KnowledgeBase] = None
        self._encoder: Optional[FrozenTextEncoder] = None
        # Dados aumentados fixados em memória (varredura de θ)
        self.augmented: Optional[List[QARecord]] = None

    def with_config(self, **overrides) -> "Experiment":
        """Mesma KB e codificador, configuração alterada (varreduras e ablações)."""
        # Reconstruir (em vez de model_copy) passa pelos validadores
        config = Settings(**{**self.config.model_dump(), **overrides})
        clone = Experiment(config)
        clone._kb = self._kb
        if config.d_enc == self.config.d_enc:
            clone._encoder = self._encoder
        return clone

    @contextmanager
    def timed(self, stage: str) -> Iterator[None]:
        started = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - started
            self.timings.stages[stage] = self.timings.stages.get(stage, 0.0) + elapsed
            logger.info(f"⏱️ {stage}: {elapsed:.1f}s")

    # ---- dados ----------------------------------------------------------

    @property
    def kb(self) -> KnowledgeBase:
        if self._kb is None:
            triples = self.paths.kb_dir / TRIPLES_FILE
            if not triples.exists():
                raise PipelineError(f"KB não encontrada em {self.paths.kb_dir}", stage="kb gen")
            self._kb = load_kb(triples, self.paths.kb_dir / RELATIONS_FILE)
        return self._kb

    @property
    def unit_table(self) -> UnitTable:
        """Tabela de unidades gravada com a KB (a distribuída com o pacote, se ausente)."""
        path = self.paths.kb_dir / UNITS_FILE
        return load_unit_table(path if path.exists() else None)

    def generate_kb(self) -> KnowledgeBase:
        kb, table = gen_synthetic_kb(
            seed=self.config.seed,
            n_entities=self.config.kb_entities,
            n_relations=self.config.kb_filler_relations,
            numeric_fraction=self.config.numeric_fraction,
        )
        write_kb(kb, self.paths.kb_dir, table)
        # O vocabulário salvo pertence à KB anterior
        self.paths.vocab.unlink(missing_ok=True)
        self._kb = kb
        self._encoder = None
        return kb

    def generate_qa(self) -> List[QARecord]:
        records = gen_qa_corpus(self.kb, self.config.qa_size, self.config.ordinal_fraction, self.config.seed)
        write_jsonl(self.paths.qa, records)
        return records

    def qa_records(self) -> List[QARecord]:
        if not self.paths.qa.exists():
            raise PipelineError("corpus de QA não encontrado", stage="data qa", path=str(self.paths.qa))
        return read_jsonl(self.paths.qa, QARecord)

    def qa_splits(self) -> Tuple[List[QARecord], List[QARecord], List[QARecord]]:
        train, validation, test = split_records(self.qa_records(), seed=self.config.seed)
        return train, validation, test

    def make_qind(self, size: Optional[int] = None, n_range: Optional[Tuple[int, int]] = None) -> List[PretrainInstance]:
        return gen_qind(self.kb, size or self.config.qind_size, n_range or self.config.n_range, self.config.seed)

    def generate_qind(self) -> List[PretrainInstance]:
        instances = self.make_qind()
        write_jsonl(self.paths.qind, (instance.to_record() for instance in instances))
        return instances

    def qind_instances(self) -> List[PretrainInstance]:
        if not self.paths.qind.exists():
            raise PipelineError("QIND não encontrado", stage="data qind", path=str(self.paths.qind))
        table = self.unit_table
        return [PretrainInstance.from_record(record, self.kb, table) for record in read_jsonl(self.paths.qind, PretrainRecord)]

    def qind_splits(self, instances: Optional[Sequence[PretrainInstance]] = None):
        instances = self.qind_instances() if instances is None else instances
        return split_records(instances, seed=self.config.seed)

    def make_qgnd(self) -> Tuple[List[PretrainInstance], QGNDReport]:
        train, _, _ = self.qa_splits()
        return gen_qgnd(train, self.kb, self.config.distractors_per_instance, self.config.seed)

    def generate_qgnd(self) -> Tuple[List[PretrainInstance], QGNDReport]:
        instances, report = self.make_qgnd()
        write_jsonl(self.paths.qgnd, (instance.to_record() for instance in instances))
        return instances, report

    def qgnd_instances(self) -> List[PretrainInstance]:
        if not self.paths.qgnd.exists():
            raise PipelineError("QGND não encontrado", stage="data qgnd", path=str(self.paths.qgnd))
        table = self.unit_table
        return [PretrainInstance.from_record(record, self.kb, table) for record in read_jsonl(self.paths.qgnd, PretrainRecord)]

    def make_augmented(self, proportion: Optional[float] = None) -> List[QARecord]:
        """θ·|treino real| pares ordinais pelo template."""
        proportion = self.config.augment_proportion if proportion is None else proportion
        train, _, _ = self.qa_splits()
        count = round(proportion * len(train))
        if count <= 0:
            return []
        pairs = gen_augmented(self.kb, count, seed=self.config.seed)
        return [pair.to_record(f"aug-{index:05d}") for index, pair in enumerate(pairs)]

    def generate_augmented(self) -> List[QARecord]:
        records = self.make_augmented()
        write_jsonl(self.paths.augmented, records)
        return records

    def augmented_records(self) -> List[QARecord]:
        """Dados aumentados do arquivo, ou gerados em memória; vazio com augment desligado."""
        if not self.config.augment:
            return []
        if self.augmented is not None:
            return self.augmented
        if self.paths.augmented.exists():
            return read_jsonl(self.paths.augmented, QARecord)
        return self.make_augmented()

    # ---- modelo ---------------------------------------------------------

    @property
    def encoder(self) -> FrozenTextEncoder:
        if self._encoder is None:
            vocab = Vocabulary.load(self.paths.vocab) if self.paths.vocab.exists() else None
            if vocab is not None:
                missing = vocab.missing_kb_words(self.kb)
                if missing:
                    logger.warning(f"⚠️ Vocabulário em {self.paths.vocab} não cobre a KB ({len(missing)} palavras); reconstruindo")
                    vocab = None
            if vocab is None:
                texts = [TEMPLATE, CORPUS_ORDINAL, CORPUS_FACTOID]
                texts += [determiner.surface for determiner in DETERMINERS]
                if self.paths.qa.exists():
                    texts += [record.question for record in self.qa_records()]
                vocab = build_vocabulary(self.kb, texts)
                self.paths.root.mkdir(parents=True, exist_ok=True)
                vocab.save(self.paths.vocab)
            self._encoder = FrozenTextEncoder(vocab, self.config.d_enc, seed=ENCODER_SEED)
        return self._encoder

    def build_model(self) -> NTNSM:
        seed_everything(self.config.seed)
        return NTNSM.from_settings(self.encoder, self.config)

    def prepare(self, records: Sequence[QARecord]) -> List[PreparedQuestion]:
        return [
            prepare_question(
                self.kb,
                record,
                self.encoder,
                damping=self.config.ppr_damping,
                top_n=self.config.ppr_top_n,
                top_k=self.config.top_k,
            )
            for record in records
        ]

    def save(self, model: NTNSM, groups: Sequence[ParameterGroup]) -> CheckpointManifest:
        return save_checkpoints(model, self.config.checkpoint_dir, self.config, groups)

    def load(self, model: NTNSM, groups: Sequence[ParameterGroup]) -> CheckpointManifest:
        return load_checkpoints(model, self.config.checkpoint_dir, self.config, groups)

    # ---- estágios -------------------------------------------------------

    def stage_pretrain_basic(self, model: NTNSM) -> CoverageCounts:
        train, _, _ = self.qa_splits()
        with self.timed("pretrain basic"):
            history, coverage = pretrain_basic(model.basic, self.prepare(train), self.config)
        self.timings.epochs["basic"] = history.seconds
        return coverage

    def stage_pretrain_nt(
        self,
        model: NTNSM,
        qind: Optional[Sequence[PretrainInstance]] = None,
        qgnd: Optional[Sequence[PretrainInstance]] = None,
    ) -> Optional[float]:
        """
        Pré-treina Θ em QIND e depois QGND; com pretrain desligado Θ fica
        na inicialização aleatória. Retorna a acurácia no QIND de teste.
        """
        if not self.config.pretrain:
            logger.info("Pré-treino do NT desligado: Θ aleatório e congelado")
            return None
        if qind is None:
            qind = self.qind_instances() if self.paths.qind.exists() else self.make_qind()
        qind_train, qind_validation, qind_test = self.qind_splits(qind)
        if qgnd is None and not self.config.qgnd:
            qgnd = []
        elif qgnd is None:
            qgnd = self.qgnd_instances() if self.paths.qgnd.exists() else self.make_qgnd()[0]
        with self.timed("pretrain nt"):
            histories = pretrain_nt(model.numerical, self.encoder, qind_train, qgnd, self.config, validation=qind_validation)
        for history in histories:
            self.timings.epochs[history.name] = history.seconds
        return evaluate_pretrain(model.numerical, self.encoder, qind_test) if qind_test else None

    def stage_classifier(self, model: NTNSM) -> float:
        train, _, _ = self.qa_splits()
        with self.timed("pretrain classifier"):
            return train_classifier(model.classifier, self.encoder, train + self.augmented_records(), self.config)

    def stage_train(self, model: NTNSM) -> MetricsReport:
        train, validation, test = self.qa_splits()
        with self.timed("prepare"):
            train_q = self.prepare(train + self.augmented_records())
            validation_q = self.prepare(validation)
        with self.timed("train"):
            result = train_full(model, train_q, validation_q, self.config)
        self.timings.epochs["train"] = result.history.seconds
        return self.stage_evaluate(model, test)

    def stage_evaluate(self, model: NTNSM, records: Optional[Sequence[QARecord]] = None) -> MetricsReport:
        if records is None:
            records = self.qa_splits()[2]
        with self.timed("evaluate"):
            questions = self.prepare(records)
            report = evaluate(model, questions, self.config)
        report.coverage = CoverageCounts(
            total=len(questions),
            usable=sum(question.covered for question in questions),
            skipped=[question.record.id for question in questions if not question.covered],
        )
        return report

    def run_pipeline(self, qind: Optional[Sequence[PretrainInstance]] = None) -> MetricsReport:
        """Pipeline completo em memória: básico, NT, classificador, treino e avaliação."""
        model = self.build_model()
        self.stage_pretrain_basic(model)
        pretrain_accuracy = None
        if model.use_numerical:
            pretrain_accuracy = self.stage_pretrain_nt(model, qind=qind)
            self.stage_classifier(model)
        report = self.stage_train(model)
        report.pretrain_accuracy = pretrain_accuracy
        return report


# ---- registro de execuções ----------------------------------------------

def create_run(db: Session, command: str, config: Settings) -> models.Run:
    run = models.Run(
        command=command,
        config_hash=config.config_hash(),
        seed=config.seed,
        status=models.RunStatus.RUNNING,
    )
    db.add(run)
    db.commit()
    db.refresh(run)
    return run


def finish_run(
    db: Session,
    run: models.Run,
    metrics: Optional[MetricsReport] = None,
    timings: Optional[TimingsReport] = None,
    error: Optional[str] = None,
) -> models.Run:
    run.status = models.RunStatus.FAILED if error else models.RunStatus.COMPLETED
    run.metrics = metrics.model_dump(mode="json") if metrics else None
    run.timings = timings.model_dump(mode="json") if timings else None
    run.error = error
    run.finished_at = datetime.now(timezone.utc)
    db.commit()
    db.refresh(run)
    return run


def record_checkpoints(db: Session, run: models.Run, manifest: CheckpointManifest, directory: Path) -> List[models.Checkpoint]:
    rows = []
    for group, entry in sorted(manifest.groups.items()):
        row = models.Checkpoint(run_id=run.id, group=group, path=str(Path(directory) / entry.file), sha256=entry.sha256)
        db.add(row)
        rows.append(row)
    db.commit()
    return rows


def get_runs(db: Session, command: Optional[str] = None, limit: int = 20) -> List[models.Run]:
    query = db.query(models.Run)
    if command:
        query = query.filter(models.Run.command == command)
    return query.order_by(desc(models.Run.created_at), desc(models.Run.id)).limit(limit).all()
