from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from app.kb.models import KnowledgeBase, NumericValue
from app.kb.normalize import normalize_value
from app.kb.schemas import UnitTable
from .determiners import OrdinalDeterminer, extremal_indices
from .schemas import PretrainRecord, QARecord


@dataclass(frozen=True)
class PretrainInstance:
    """(q, r, V_r, v_q): determinante ou pergunta, relação, números e índice do correto."""

    q: str
    relation: str
    values: Tuple[NumericValue, ...]
    answer_index: int

    @property
    def sort_keys(self) -> List[float]:
        return [value.sort_key for value in self.values]

    def to_record(self) -> PretrainRecord:
        return PretrainRecord(
            q=self.q,
            relation=self.relation,
            values=[value.raw_text for value in self.values],
            answer_index=self.answer_index,
        )

    @classmethod
    def from_record(cls, record: PretrainRecord, kb: KnowledgeBase, unit_table: Optional[UnitTable] = None) -> "PretrainInstance":
        """Renormaliza os valores brutos com a tabela de unidades da KB (a mesma da geração)."""
        meta = kb.relations[record.relation]
        return cls(
            q=record.q,
            relation=record.relation,
            values=tuple(normalize_value(raw, meta, unit_table) for raw in record.values),
            answer_index=record.answer_index,
        )

    def is_consistent(self, determiner: OrdinalDeterminer) -> bool:
        return self.answer_index in extremal_indices(self.sort_keys, determiner)


@dataclass(frozen=True)
class AugmentedQAPair:
    question: str
    topic_entity: str
    hub_relation: str
    relation: str
    determiner: str
    candidates: Tuple[str, ...]
    answers: Tuple[str, ...]

    def to_record(self, record_id: str) -> QARecord:
        return QARecord(
            id=record_id,
            question=self.question,
            topic_entities=[self.topic_entity],
            answers=list(self.answers),
            ordinal=True,
            relation=self.relation,
            hub_relation=self.hub_relation,
            determiner=self.determiner,
        )


@dataclass
class QGNDReport:
    """Entradas do corpus descartadas e rótulos não extremos mantidos."""

    emitted: int = 0
    skipped: List[str] = field(default_factory=list)
    rejected: List[str] = field(default_factory=list)
    inconsistent: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class TemplateSlot:
    """(e_h, r_h, r) com pelo menos dois candidatos valorados."""

    hub: str
    hub_relation: str
    relation: str
    candidates: Tuple[str, ...]
