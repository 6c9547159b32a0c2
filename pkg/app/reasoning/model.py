"""
Modelo completo: raciocínio básico (Φ), NumericalTransformer congelado (Θ),
raciocínio abrangente (Ψ) e a mistura pelo classificador de tipo de pergunta.
"""
import logging
from dataclasses import dataclass, field
from typing import List

import torch
from torch import Tensor, nn

from app.core.config import Settings
from app.core.nn import ParameterGroup, ParameterSet
from app.encoders.services import FrozenTextEncoder, QuestionTypeClassifier
from .basic import BasicReasoner, NSMReasoner
from .comprehensive import CandidateSet, ComprehensiveReasoner, mixture_predict, prune_entities
from .context import PreparedQuestion
from .numerical import NumericalTransformer, TruncationReport

logger = logging.getLogger(__name__)


@dataclass
class Prediction:
    entities: tuple
    p_basic: Tensor
    p_comprehensive: Tensor
    p_final: Tensor
    p_ordinal: float
    candidates: CandidateSet
    fallback: bool
    truncations: List[TruncationReport] = field(default_factory=list)

    def top_entity(self) -> str:
        """Entidade de maior probabilidade; empate vai para o menor id."""
        scores = self.p_final.detach().tolist()
        best = min(range(len(scores)), key=lambda i: (-scores[i], self.entities[i]))
        return self.entities[best]


class NTNSM(nn.Module):
    def __init__(
        self,
        encoder: FrozenTextEncoder,
        basic: BasicReasoner,
        numerical: NumericalTransformer,
        comprehensive: ComprehensiveReasoner,
        classifier: QuestionTypeClassifier,
        mu: float = 0.05,
        use_numerical: bool = True,
    ):
        super().__init__()
        # O codificador congelado não pertence a nenhum grupo de parâmetros
        self.__dict__["encoder"] = encoder
        self.basic = basic
        self.numerical = numerical
        self.comprehensive = comprehensive
        self.classifier = classifier
        self.mu = mu
        self.use_numerical = use_numerical

    @classmethod
    def from_settings(cls, encoder: FrozenTextEncoder, config: Settings) -> "NTNSM":
        return cls(
            encoder=encoder,
            basic=NSMReasoner(config.d_enc, config.d_h, config.reasoning_steps),
            numerical=NumericalTransformer(
                d_enc=config.d_enc,
                d_h=config.d_h,
                layers=config.nt_layers,
                heads=config.nt_heads,
                number_mode="sne" if config.sne else "cls",
                sam=config.sam,
                n_max=config.n_max_numbers,
            ),
            comprehensive=ComprehensiveReasoner(config.d_enc, config.d_h),
            classifier=QuestionTypeClassifier(config.d_enc),
            mu=config.mu,
            use_numerical=config.numerical,
        )

    def parameter_set(self) -> ParameterSet:
        return ParameterSet.from_modules({
            ParameterGroup.BASIC: self.basic,
            ParameterGroup.NUMERICAL: self.numerical,
            ParameterGroup.COMPREHENSIVE: self.comprehensive,
            ParameterGroup.CLASSIFIER: self.classifier,
        })

    def ordinal_probability(self, question: PreparedQuestion) -> float:
        if question.p_ordinal is None:
            with torch.no_grad():
                question.p_ordinal = float(self.classifier(question.encoding.pooled))
        return question.p_ordinal

    def numeric_facts(self, question: PreparedQuestion, candidates: CandidateSet, p_basic: Tensor):
        """
        Fatos numéricos (dono, r, logit, v) dos candidatos; os números de cada
        relação passam juntos pelo NumericalTransformer congelado.
        """
        position = {entity: slot for slot, entity in enumerate(candidates.indices)}
        owners, relations, logits, numbers, truncations = [], [], [], [], []
        relevance = p_basic.detach().tolist()
        for score in question.relations:
            facts = [(entity, value) for entity, value in question.facts.get(score.meta.name, []) if entity in position]
            if not facts:
                continue
            with torch.no_grad():
                nt_input = self.numerical.build_input(
                    question.encoding,
                    [value for _, value in facts],
                    self.encoder,
                    relevance=[relevance[entity] for entity, _ in facts],
                )
                outputs = self.numerical([nt_input])[0]
            if nt_input.truncation is not None:
                truncations.append(nt_input.truncation)
            for kept in nt_input.kept:
                owners.append(position[facts[kept][0]])
                relations.append(score.vector)
                logits.append(score.logit)
            numbers.append(outputs)
        if not owners:
            return None, truncations
        dtype = p_basic.dtype
        return (
            torch.tensor(owners, dtype=torch.long),
            torch.stack(relations).to(dtype),
            torch.tensor(logits, dtype=dtype),
            torch.cat(numbers).to(dtype),
        ), truncations

    def forward(self, question: PreparedQuestion) -> Prediction:
        trace = self.basic.reason(question.graph, question.encoding)
        entity_embeddings = trace.entity_embeddings
        p_basic = self.basic.predict_basic(entity_embeddings)
        candidates = prune_entities(p_basic, self.mu)

        if not self.use_numerical:
            return Prediction(question.graph.entities, p_basic, p_basic, p_basic, 0.0, candidates, True)

        p_ordinal = self.ordinal_probability(question)
        facts, truncations = (None, [])
        if question.relations and not candidates.is_empty:
            facts, truncations = self.numeric_facts(question, candidates, p_basic)
        fallback = facts is None
        if fallback:
            # Sem R_q, sem candidatos ou sem números: a predição é a básica
            p_comprehensive = p_basic
            p_final = p_basic
        else:
            p_comprehensive = self.comprehensive(entity_embeddings, p_basic, candidates.indices, *facts)
            p_final = mixture_predict(p_basic, p_comprehensive, p_ordinal)
        return Prediction(
            entities=question.graph.entities,
            p_basic=p_basic,
            p_comprehensive=p_comprehensive,
            p_final=p_final,
            p_ordinal=p_ordinal,
            candidates=candidates,
            fallback=fallback,
            truncations=truncations,
        )
