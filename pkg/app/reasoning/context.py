"""
Preparação de uma pergunta para o raciocínio.

Tudo o que depende só de partes congeladas (subgrafo recuperado, vetores
de entidades e relações, relações numéricas selecionadas, fatos numéricos
e probabilidade de pergunta ordinal) é calculado uma única vez aqui.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import torch
from torch import Tensor

from app.core.exceptions import ReasoningError
from app.datagen.schemas import QARecord
from app.encoders.services import FrozenTextEncoder, QuestionEncoding, QuestionTypeClassifier
from app.kb.models import KnowledgeBase, NumericValue, Subgraph
from app.kb.services import retrieve_subgraph
from .comprehensive import RelationScore, select_numerical_relations

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GraphInputs:
    """Subgrafo em forma tensorial; cada tripla vira uma aresta em cada sentido."""

    entities: Tuple[str, ...]
    entity_vectors: Tensor
    topic_mask: Tensor
    edge_source: Tensor
    edge_target: Tensor
    edge_relation: Tensor
    edge_backward: Tensor
    relation_vectors: Tensor
    relations: Tuple[str, ...] = ()

    @classmethod
    def from_subgraph(cls, subgraph: Subgraph, encoder: FrozenTextEncoder) -> "GraphInputs":
        if len(subgraph) == 0:
            raise ReasoningError("subgrafo sem entidades")
        index = subgraph.index()
        relations = tuple(sorted({triple.relation for triple in subgraph.triples}))
        relation_index = {name: position for position, name in enumerate(relations)}
        sources, targets, kinds, backward = [], [], [], []
        for triple in subgraph.triples:
            head, tail = index[triple.head], index[triple.tail]
            sources += [head, tail]
            targets += [tail, head]
            kinds += [relation_index[triple.relation]] * 2
            backward += [False, True]
        topics = set(subgraph.topic_entities)
        if relations:
            relation_vectors = torch.stack([encoder.encode_name(name) for name in relations])
        else:
            relation_vectors = torch.zeros(0, encoder.d_enc, dtype=encoder.dtype)
        return cls(
            entities=subgraph.entities,
            entity_vectors=torch.stack([encoder.encode_entity(entity) for entity in subgraph.entities]),
            topic_mask=torch.tensor([entity in topics for entity in subgraph.entities], dtype=torch.bool),
            edge_source=torch.tensor(sources, dtype=torch.long),
            edge_target=torch.tensor(targets, dtype=torch.long),
            edge_relation=torch.tensor(kinds, dtype=torch.long),
            edge_backward=torch.tensor(backward, dtype=torch.bool),
            relation_vectors=relation_vectors,
            relations=relations,
        )

    def __len__(self) -> int:
        return len(self.entities)


@dataclass
class PreparedQuestion:
    record: QARecord
    encoding: QuestionEncoding
    subgraph: Subgraph
    graph: GraphInputs
    answers: Tensor
    relations: List[RelationScore]
    # relação -> [(índice da entidade no subgrafo, valor)]
    facts: Dict[str, List[Tuple[int, NumericValue]]] = field(default_factory=dict)
    p_ordinal: Optional[float] = None

    @property
    def covered(self) -> bool:
        """Alguma resposta correta está no subgrafo recuperado."""
        return bool(self.answers.sum() > 0)

    @property
    def ordinal(self) -> bool:
        return self.record.ordinal


def collect_facts(kb: KnowledgeBase, subgraph: Subgraph, relations: List[RelationScore]) -> Dict[str, List[Tuple[int, NumericValue]]]:
    index = subgraph.index()
    facts: Dict[str, List[Tuple[int, NumericValue]]] = {}
    for score in relations:
        name = score.meta.name
        facts[name] = [(index[t.head], t.tail) for t in kb.by_relation[name] if t.head in index]
    return facts


def prepare_question(
    kb: KnowledgeBase,
    record: QARecord,
    encoder: FrozenTextEncoder,
    classifier: Optional[QuestionTypeClassifier] = None,
    damping: float = 0.85,
    top_n: int = 500,
    top_k: int = 3,
) -> PreparedQuestion:
    encoding = encoder.encode_question(record.question)
    subgraph = retrieve_subgraph(kb, record.topic_entities, damping=damping, top_n=top_n)
    graph = GraphInputs.from_subgraph(subgraph, encoder)
    gold = set(record.answers)
    answers = torch.tensor([entity in gold for entity in subgraph.entities], dtype=encoder.dtype)
    relations = select_numerical_relations(kb, subgraph, encoding, encoder, top_k)
    p_ordinal = None
    if classifier is not None and bool(classifier.trained):
        with torch.no_grad():
            p_ordinal = float(classifier(encoding.pooled))
    return PreparedQuestion(
        record=record,
        encoding=encoding,
        subgraph=subgraph,
        graph=graph,
        answers=answers,
        relations=relations,
        facts=collect_facts(kb, subgraph, relations),
        p_ordinal=p_ordinal,
    )
