"""
Raciocínio abrangente: seleção das relações numéricas da pergunta, poda de
entidades pela probabilidade básica, fusão dos embeddings de números nas
entidades candidatas e a mistura final pelo tipo de pergunta.
"""
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from app.core.exceptions import ConfigurationError, ShapeError
from app.encoders.services import FrozenTextEncoder, QuestionEncoding
from app.kb.models import KnowledgeBase, RelationMeta, Subgraph

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RelationScore:
    meta: RelationMeta
    vector: Tensor
    cosine: float
    # r^T q, usado como logit da atenção sobre relações
    logit: float


@dataclass(frozen=True)
class CandidateSet:
    indices: Tuple[int, ...]
    probabilities: Tuple[float, ...]

    @property
    def is_empty(self) -> bool:
        return not self.indices

    def __len__(self) -> int:
        return len(self.indices)


def select_numerical_relations(
    kb: KnowledgeBase,
    subgraph: Subgraph,
    encoding: QuestionEncoding,
    encoder: FrozenTextEncoder,
    k: int = 3,
) -> List[RelationScore]:
    """
    As K relações numéricas incidentes ao subgrafo mais parecidas (cosseno)
    com a pergunta; empates resolvidos pelo nome da relação.
    """
    if k < 1:
        raise ConfigurationError("K deve ser >= 1", k=k)
    incident = set()
    for entity in subgraph.entities:
        for triple in kb.out_triples(entity):
            if triple.is_numerical:
                incident.add(triple.relation)

    scored = []
    pooled = encoding.pooled
    for name in sorted(incident):
        vector = encoder.encode_relation(kb.relations[name]).to(pooled.dtype)
        cosine = float(F.cosine_similarity(vector, pooled, dim=0))
        scored.append(RelationScore(kb.relations[name], vector, cosine, float(vector @ pooled)))
    scored.sort(key=lambda score: (-score.cosine, score.meta.name))
    return scored[:k]


def prune_entities(basic_probs: Tensor, mu: float = 0.05) -> CandidateSet:
    """Entidades com probabilidade básica estritamente maior que mu."""
    if not 0.0 <= mu < 1.0:
        raise ConfigurationError("mu deve estar em [0, 1)", mu=mu)
    probs = basic_probs.detach()
    indices = torch.nonzero(probs > mu, as_tuple=False).flatten().tolist()
    return CandidateSet(indices=tuple(indices), probabilities=tuple(float(probs[i]) for i in indices))


def relation_attention(logits: Tensor, owners: Tensor, n_owners: int) -> Tensor:
    """Softmax dos logits r^T q agrupado por entidade dona de cada fato."""
    if logits.numel() == 0:
        return logits
    peak = torch.full((n_owners,), float("-inf"), dtype=logits.dtype)
    peak = peak.scatter_reduce(0, owners, logits, reduce="amax", include_self=True)
    weights = torch.exp(logits - peak[owners])
    totals = torch.zeros(n_owners, dtype=logits.dtype).index_add(0, owners, weights)
    return weights / totals[owners]


def mixture_predict(p_basic: Tensor, p_comprehensive: Tensor, p_ordinal) -> Tensor:
    """p = p_o * p_c + (1 - p_o) * p_b por entidade."""
    return p_ordinal * p_comprehensive + (1.0 - p_ordinal) * p_basic


class ComprehensiveReasoner(nn.Module):
    """Parâmetros Ψ: fusão numérica, integração e cabeça de predição própria."""

    def __init__(self, d_enc: int, d_h: int):
        super().__init__()
        self.d_enc = d_enc
        self.d_h = d_h
        self.numeric_fusion = nn.Linear(d_enc + d_h, d_h)
        self.integration = nn.Linear(2 * d_h, d_h)
        self.predict = nn.Linear(d_h, 1)

    def integrate_and_fuse(
        self,
        entity_embeddings: Tensor,
        fact_owners: Tensor,
        fact_relations: Tensor,
        fact_logits: Tensor,
        fact_numbers: Tensor,
    ) -> Tensor:
        """
        ê_i = W_inter [e_i; ẽ_i] + b_inter, com
        ẽ_i = sum_j alpha_j (W_num [r_j; v_j] + b_num) sobre os fatos da entidade
        (vetor nulo quando ela não tem fatos numéricos).
        """
        count, width = entity_embeddings.shape
        if width != self.d_h:
            raise ShapeError("largura das entidades difere de d_h", width=width, d_h=self.d_h)
        numeric = torch.zeros(count, self.d_h, dtype=entity_embeddings.dtype)
        if fact_owners.numel():
            if fact_relations.shape[-1] != self.d_enc or fact_numbers.shape[-1] != self.d_h:
                raise ShapeError(
                    "largura dos fatos numéricos incompatível",
                    relation=tuple(fact_relations.shape),
                    number=tuple(fact_numbers.shape),
                )
            alpha = relation_attention(fact_logits, fact_owners, count)
            messages = self.numeric_fusion(torch.cat([fact_relations, fact_numbers], dim=-1))
            numeric = numeric.index_add(0, fact_owners, alpha.unsqueeze(-1) * messages)
        return self.integration(torch.cat([entity_embeddings, numeric], dim=-1))

    def predict_comprehensive(self, fused: Tensor) -> Tensor:
        return torch.sigmoid(self.predict(fused)).squeeze(-1)

    def forward(
        self,
        entity_embeddings: Tensor,
        basic_probs: Tensor,
        candidates: Sequence[int],
        fact_owners: Tensor,
        fact_relations: Tensor,
        fact_logits: Tensor,
        fact_numbers: Tensor,
    ) -> Tensor:
        """
        Probabilidade abrangente para todo o subgrafo: candidatos recebem a
        fusão, as demais entidades mantêm a probabilidade básica.

        `fact_owners` indexa posições dentro de `candidates`.
        """
        if not candidates:
            return basic_probs
        index = torch.tensor(list(candidates), dtype=torch.long)
        fused = self.integrate_and_fuse(entity_embeddings[index], fact_owners, fact_relations, fact_logits, fact_numbers)
        return basic_probs.index_copy(0, index, self.predict_comprehensive(fused))
