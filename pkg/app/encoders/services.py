"""
Codificadores congelados.

O modelo de linguagem pré-treinado é substituído por uma tabela de
embeddings semeada (cada linha derivada do hash do token) seguida de uma
camada de mistura bidirecional sem parâmetros. Só a projeção do SNE e o
classificador de tipo de pergunta são treináveis.
"""
import functools
import hashlib
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from app.core.exceptions import ConfigurationError, DataValidationError, EncodingError, UsageError
from app.core.nn import sinusoidal_positions, softmax
from app.kb.models import NumericValue, RelationMeta
from .vocab import END, SEP, START, Vocabulary, name_words, tokenize

logger = logging.getLogger(__name__)

NUMBER_MODES = ("sne", "cls")

# Entradas de cada cache de inferência (perguntas e números)
CACHE_SIZE = 4096


def _hashed_rows(tokens: Sequence[str], width: int, seed: int, namespace: str) -> Tensor:
    rows = []
    for token in tokens:
        digest = hashlib.blake2b(f"{seed}:{namespace}:{token}".encode("utf-8"), digest_size=8).digest()
        generator = torch.Generator().manual_seed(int.from_bytes(digest, "little") & 0x7FFF_FFFF_FFFF_FFFF)
        rows.append(torch.randn(width, generator=generator))
    return torch.stack(rows)


def mix(hidden: Tensor) -> Tensor:
    """Camada de mistura congelada: 0.5 * (H + softmax(H H^T / sqrt(d)) H)."""
    scores = hidden @ hidden.transpose(-2, -1) / math.sqrt(hidden.shape[-1])
    return 0.5 * (hidden + softmax(scores, axis=-1) @ hidden)


@dataclass(frozen=True)
class QuestionEncoding:
    tokens: Tuple[str, ...]
    word_vectors: Tensor
    pooled: Tensor

    @classmethod
    def from_word_vectors(cls, word_vectors: Tensor, tokens: Sequence[str] = ()) -> "QuestionEncoding":
        if word_vectors.dim() != 2 or word_vectors.shape[0] == 0:
            raise EncodingError("pergunta sem palavras", shape=tuple(word_vectors.shape))
        return cls(tokens=tuple(tokens), word_vectors=word_vectors, pooled=word_vectors.mean(dim=0))

    def to(self, dtype: torch.dtype) -> "QuestionEncoding":
        return QuestionEncoding(self.tokens, self.word_vectors.to(dtype), self.pooled.to(dtype))


class FrozenTextEncoder(nn.Module):
    """Tabelas de palavras e de caracteres de números, ambas congeladas."""

    def __init__(self, vocab: Vocabulary, d_enc: int = 64, seed: int = 0, cache_size: int = CACHE_SIZE):
        super().__init__()
        if d_enc <= 0 or d_enc % 2:
            raise ConfigurationError("d_enc deve ser positivo e par", d_enc=d_enc)
        self.vocab = vocab
        self.d_enc = d_enc
        self.seed = seed
        self.word_table = nn.Embedding.from_pretrained(_hashed_rows(vocab.word_tokens, d_enc, seed, "word"), freeze=True)
        self.char_table = nn.Embedding.from_pretrained(_hashed_rows(vocab.char_tokens, d_enc, seed, "char"), freeze=True)
        # LRU por instância; o dtype entra na chave
        self._question_cache = functools.lru_cache(maxsize=cache_size)(self._encode_question)
        self._number_cache = functools.lru_cache(maxsize=cache_size)(self._encode_number)

    @property
    def dtype(self) -> torch.dtype:
        return self.word_table.weight.dtype

    def word_vectors(self, words: Sequence[str]) -> Tensor:
        ids = torch.tensor([self.vocab.word_id(word) for word in words], dtype=torch.long)
        return self.word_table(ids)

    def separator_vector(self) -> Tensor:
        return self.word_vectors([SEP])[0]

    @torch.no_grad()
    def _encode_question(self, text: str, dtype: torch.dtype) -> QuestionEncoding:
        tokens = tokenize(text)
        if not tokens:
            raise EncodingError("pergunta vazia após tokenização", text=text)
        return QuestionEncoding.from_word_vectors(mix(self.word_vectors(tokens)), tokens)

    def encode_question(self, text: str) -> QuestionEncoding:
        return self._question_cache(text, self.dtype)

    @torch.no_grad()
    def encode_name(self, name: str) -> Tensor:
        """Média dos vetores da tabela para as palavras de um nome."""
        words = name_words(name)
        if not words:
            raise EncodingError("nome vazio", name=name)
        return self.word_vectors(words).mean(dim=0)

    def encode_relation(self, meta: RelationMeta) -> Tensor:
        return self.encode_name(meta.name)

    def encode_entity(self, entity: str) -> Tensor:
        return self.encode_name(entity)

    def _number_ids(self, value: NumericValue) -> Tensor:
        if not value.canonical_tokens:
            raise EncodingError("número sem tokens canônicos", raw=value.raw_text)
        unknown = [char for char in value.canonical_tokens if char not in self.vocab.char_ids]
        if unknown:
            raise EncodingError("token fora do vocabulário de números", raw=value.raw_text, tokens=unknown)
        ids = [self.vocab.char_ids[START]] + [self.vocab.char_ids[c] for c in value.canonical_tokens]
        return torch.tensor(ids + [self.vocab.char_ids[END]], dtype=torch.long)

    @torch.no_grad()
    def _encode_number(self, value: NumericValue, mode: str, dtype: torch.dtype) -> Tensor:
        ids = self._number_ids(value)
        hidden = self.char_table(ids) + sinusoidal_positions(len(ids), self.d_enc, dtype)
        mixed = mix(hidden)
        return torch.cat([mixed[0], mixed[-1]]) if mode == "sne" else mixed.mean(dim=0)

    @torch.no_grad()
    def number_features(self, values: Sequence[NumericValue], mode: str = "sne") -> Tensor:
        """
        Saída congelada do codificador de caracteres para "[S] tokens [E]".

        Modo 'sne' concatena as saídas de [S] e [E] (2*d_enc); modo 'cls'
        usa a média de todas as posições (d_enc).
        """
        if mode not in NUMBER_MODES:
            raise ConfigurationError("modo de número desconhecido", mode=mode)
        features = [self._number_cache(value, mode, self.dtype) for value in values]
        width = 2 * self.d_enc if mode == "sne" else self.d_enc
        if not features:
            return torch.zeros(0, width, dtype=self.dtype)
        return torch.stack(features)

    def fingerprint(self, probes: Sequence[str]) -> str:
        """Hash das codificações de um conjunto fixo de perguntas."""
        digest = hashlib.sha256()
        for text in probes:
            digest.update(self.encode_question(text).word_vectors.cpu().contiguous().numpy().tobytes())
        return digest.hexdigest()


class NumberEncoder(nn.Module):
    """Projeção treinável (grupo Θ) das características congeladas do número para d_h."""

    def __init__(self, d_enc: int, d_h: int, mode: str = "sne"):
        super().__init__()
        if mode not in NUMBER_MODES:
            raise ConfigurationError("modo de número desconhecido", mode=mode)
        self.mode = mode
        self.projection = nn.Linear(2 * d_enc if mode == "sne" else d_enc, d_h)

    def forward(self, features: Tensor) -> Tensor:
        return self.projection(features)


def encode_number_sne(encoder: FrozenTextEncoder, number_encoder: NumberEncoder, values: Sequence[NumericValue]) -> Tensor:
    """Vetores v^(0) (m x d_h) dos números."""
    return number_encoder(encoder.number_features(values, number_encoder.mode))


class QuestionTypeClassifier(nn.Module):
    """Probabilidade de a pergunta ser ordinal a partir do vetor médio congelado."""

    def __init__(self, d_enc: int):
        super().__init__()
        self.head = nn.Linear(d_enc, 1)
        self.register_buffer("trained", torch.tensor(False))

    def forward(self, pooled: Tensor) -> Tensor:
        if not bool(self.trained):
            raise UsageError("classificador de tipo de pergunta não treinado")
        return torch.sigmoid(self.head(pooled)).squeeze(-1)

    def fit(
        self,
        pooled: Tensor,
        labels: Tensor,
        epochs: int = 30,
        learning_rate: float = 0.01,
        batch_size: int = 40,
        seed: int = 0,
    ) -> float:
        """Treina com entropia cruzada binária; retorna a acurácia de treino."""
        if len(labels) == 0:
            raise DataValidationError("conjunto de treino vazio")
        distinct = set(labels.tolist())
        if len(distinct) < 2:
            raise DataValidationError("rótulos degenerados: todas as perguntas da mesma classe", labels=sorted(distinct))
        targets = labels.to(pooled.dtype)
        optimizer = torch.optim.Adam(self.head.parameters(), lr=learning_rate)
        generator = torch.Generator().manual_seed(seed)
        for epoch in range(epochs):
            order = torch.randperm(len(targets), generator=generator)
            total = 0.0
            for start in range(0, len(order), batch_size):
                batch = order[start:start + batch_size]
                logits = self.head(pooled[batch]).squeeze(-1)
                loss = F.binary_cross_entropy_with_logits(logits, targets[batch], reduction="sum")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                total += float(loss)
            logger.debug(f"classificador época {epoch + 1}/{epochs}: perda {total / len(targets):.4f}")
        self.trained.fill_(True)
        with torch.no_grad():
            accuracy = float(((self(pooled) > 0.5).to(targets.dtype) == targets).to(torch.float64).mean())
        logger.info(f"✅ Classificador treinado: acurácia de treino {accuracy:.3f}")
        return accuracy


def classify_question_type(text: str, encoder: FrozenTextEncoder, classifier: QuestionTypeClassifier) -> float:
    """p(t_q = ordinal) para um texto de pergunta."""
    with torch.no_grad():
        return float(classifier(encoder.encode_question(text).pooled))

