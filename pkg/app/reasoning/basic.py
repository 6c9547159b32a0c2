"""
Raciocinador básico: GNN condicionada à pergunta sobre o subgrafo.

A interface `BasicReasoner` é o ponto de troca de backend; o único backend
distribuído é uma reimplementação simplificada no estilo NSM (instruções
por passo, mensagens com portão por relação e distribuição de atenção
sobre entidades).
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List

import torch
from torch import Tensor, nn

from app.core.exceptions import ReasoningError
from app.core.nn import softmax
from app.encoders.services import QuestionEncoding
from .context import GraphInputs

logger = logging.getLogger(__name__)


@dataclass
class ReasoningTrace:
    """Estado de cada passo: instruções e distribuições de atenção sobre entidades."""

    entity_embeddings: Tensor
    instructions: List[Tensor]
    distributions: List[Tensor]


class BasicReasoner(nn.Module, ABC):
    """Parâmetros Φ: produz E e as probabilidades básicas p(e_i | q, G_q)."""

    @abstractmethod
    def reason(self, graph: GraphInputs, encoding: QuestionEncoding) -> ReasoningTrace:
        ...

    @abstractmethod
    def predict_basic(self, entity_embeddings: Tensor) -> Tensor:
        ...

    def forward(self, graph: GraphInputs, encoding: QuestionEncoding) -> Tensor:
        return self.predict_basic(self.reason(graph, encoding).entity_embeddings)


class NSMReasoner(BasicReasoner):
    def __init__(self, d_enc: int = 64, d_h: int = 64, steps: int = 3):
        super().__init__()
        if steps < 1:
            raise ReasoningError("são necessários T >= 1 passos de raciocínio", steps=steps)
        self.d_h = d_h
        self.steps = steps
        self.entity_proj = nn.Linear(d_enc, d_h)
        self.question_proj = nn.Linear(d_enc, d_h)
        self.relation_forward = nn.Linear(d_enc, d_h)
        self.relation_backward = nn.Linear(d_enc, d_h)
        self.step_queries = nn.Parameter(torch.randn(steps, d_h) / math.sqrt(d_h))
        self.updates = nn.ModuleList(nn.Linear(2 * d_h, d_h) for _ in range(steps))
        self.attention_score = nn.Linear(d_h, 1)
        self.predict = nn.Linear(d_h, 1)

    def instruction(self, step: int, words: Tensor, pooled: Tensor) -> Tensor:
        """i^(t): atenção sobre as palavras com a consulta treinável do passo."""
        query = self.step_queries[step] + pooled
        weights = softmax(words @ query / math.sqrt(self.d_h), axis=0)
        return weights @ words

    def initial_distribution(self, graph: GraphInputs) -> Tensor:
        topics = graph.topic_mask.to(graph.entity_vectors.dtype)
        if topics.sum() == 0:
            raise ReasoningError("subgrafo sem entidade de tópico")
        return topics / topics.sum()

    def reason(self, graph: GraphInputs, encoding: QuestionEncoding) -> ReasoningTrace:
        if len(graph) == 0:
            raise ReasoningError("subgrafo sem entidades")
        words = self.question_proj(encoding.word_vectors)
        pooled = self.question_proj(encoding.pooled)
        entities = self.entity_proj(graph.entity_vectors)
        distribution = self.initial_distribution(graph)

        has_edges = graph.edge_source.numel() > 0
        if has_edges:
            forward = self.relation_forward(graph.relation_vectors)
            backward = self.relation_backward(graph.relation_vectors)
            edge_relations = torch.where(
                graph.edge_backward.unsqueeze(-1),
                backward[graph.edge_relation],
                forward[graph.edge_relation],
            )

        instructions, distributions = [], [distribution]
        for step in range(self.steps):
            instruction = self.instruction(step, words, pooled)
            aggregated = torch.zeros_like(entities)
            if has_edges:
                gate = torch.sigmoid(edge_relations @ instruction / math.sqrt(self.d_h))
                weight = distribution[graph.edge_source] * gate
                messages = weight.unsqueeze(-1) * torch.relu(edge_relations * instruction)
                aggregated = aggregated.index_add(0, graph.edge_target, messages)
            entities = torch.relu(self.updates[step](torch.cat([entities, aggregated], dim=-1)))
            distribution = softmax(self.attention_score(entities).squeeze(-1), axis=0)
            instructions.append(instruction)
            distributions.append(distribution)
        return ReasoningTrace(entity_embeddings=entities, instructions=instructions, distributions=distributions)

    def predict_basic(self, entity_embeddings: Tensor) -> Tensor:
        return torch.sigmoid(self.predict(entity_embeddings)).squeeze(-1)


def nsm_forward(reasoner: BasicReasoner, graph: GraphInputs, encoding: QuestionEncoding) -> Tensor:
    """Embeddings finais E = E^(T) das entidades do subgrafo."""
    return reasoner.reason(graph, encoding).entity_embeddings
