"""
NumericalTransformer: entrada [palavras; [SEP]; números], máscara de
atenção ordenada por valor (SAM) e L camadas de transformer mascarado.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import torch
from torch import Tensor, nn
from torch.nn.utils.rnn import pad_sequence

from app.core.exceptions import DataValidationError, ShapeError
from app.core.nn import MASK_SENTINEL, masked_attention, sinusoidal_positions
from app.encoders.services import FrozenTextEncoder, NumberEncoder, QuestionEncoding
from app.kb.models import NumericValue

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NTLayout:
    """n palavras da pergunta, 1 separador e m números, nessa ordem."""

    n_question: int
    m_numbers: int

    @property
    def size(self) -> int:
        return self.n_question + 1 + self.m_numbers

    @property
    def separator(self) -> int:
        return self.n_question

    @property
    def numbers(self) -> slice:
        return slice(self.n_question + 1, self.size)


@dataclass(frozen=True)
class TruncationReport:
    requested: int
    kept: int

    @property
    def dropped(self) -> int:
        return self.requested - self.kept


@dataclass
class NTInput:
    rows: Tensor
    layout: NTLayout
    sort_keys: Tensor
    values: Tuple[NumericValue, ...]
    # Posições (na lista original) dos números mantidos
    kept: Tuple[int, ...] = ()
    truncation: Optional[TruncationReport] = None

    def __post_init__(self):
        if self.rows.shape[0] != self.layout.size:
            raise ShapeError("número de linhas difere de n+m+1", rows=self.rows.shape[0], expected=self.layout.size)


def build_mask(layout: NTLayout, sort_keys: Tensor, sam: bool = True, dtype: torch.dtype = torch.float32) -> Tensor:
    """
    Máscara aditiva (n+m+1)^2: número i vê as palavras, o [SEP] e os números
    de chave estritamente menor; palavras e [SEP] nunca veem números. Sem
    SAM a atenção é completa.
    """
    size = layout.size
    if not sam:
        return torch.zeros(size, size, dtype=dtype)
    if sort_keys.numel() != layout.m_numbers:
        raise ShapeError("uma chave por número", keys=sort_keys.numel(), m=layout.m_numbers)
    allowed = torch.zeros(size, size, dtype=torch.bool)
    context = slice(0, layout.separator + 1)
    allowed[:, context] = True
    keys = sort_keys.to(torch.float64)
    allowed[layout.numbers, layout.numbers] = keys.unsqueeze(1) > keys.unsqueeze(0)
    mask = torch.full((size, size), MASK_SENTINEL, dtype=dtype)
    return mask.masked_fill(allowed, 0.0)


def batch_masks(masks: Sequence[Tensor]) -> Tensor:
    """Empilha máscaras de tamanhos diferentes; linhas de preenchimento veem só a si mesmas."""
    longest = max(mask.shape[0] for mask in masks)
    batch = torch.full((len(masks), longest, longest), MASK_SENTINEL, dtype=masks[0].dtype)
    diagonal = torch.arange(longest)
    for position, mask in enumerate(masks):
        size = mask.shape[0]
        batch[position, :size, :size] = mask
        batch[position, diagonal[size:], diagonal[size:]] = 0.0
    return batch


class NTLayer(nn.Module):
    """Atenção mascarada -> residual + norma -> feed-forward -> residual + norma."""

    def __init__(self, d_h: int, heads: int, ffn_width: int):
        super().__init__()
        if d_h % heads:
            raise ShapeError("d_h deve ser divisível pelo número de cabeças", d_h=d_h, heads=heads)
        self.heads = heads
        scale = d_h ** -0.5
        self.w_query = nn.Parameter(torch.randn(d_h, d_h) * scale)
        self.w_key = nn.Parameter(torch.randn(d_h, d_h) * scale)
        self.w_value = nn.Parameter(torch.randn(d_h, d_h) * scale)
        self.output = nn.Linear(d_h, d_h)
        self.norm_attention = nn.LayerNorm(d_h)
        self.feed_forward = nn.Sequential(nn.Linear(d_h, ffn_width), nn.ReLU(), nn.Linear(ffn_width, d_h))
        self.norm_output = nn.LayerNorm(d_h)

    def forward(self, hidden: Tensor, mask: Tensor) -> Tensor:
        attended = masked_attention(hidden, self.w_query, self.w_key, self.w_value, mask, self.heads)
        hidden = self.norm_attention(hidden + self.output(attended))
        return self.norm_output(hidden + self.feed_forward(hidden))


class NumericalTransformer(nn.Module):
    """Parâmetros Θ, incluindo a projeção do SNE e W_pretrain."""

    def __init__(
        self,
        d_enc: int = 64,
        d_h: int = 64,
        layers: int = 2,
        heads: int = 8,
        number_mode: str = "sne",
        sam: bool = True,
        n_max: int = 50,
    ):
        super().__init__()
        self.d_h = d_h
        self.sam = sam
        self.n_max = n_max
        self.question_projection = nn.Linear(d_enc, d_h)
        self.number_encoder = NumberEncoder(d_enc, d_h, number_mode)
        self.layers = nn.ModuleList(NTLayer(d_h, heads, 4 * d_h) for _ in range(layers))
        self.pretrain_head = nn.Linear(d_h, 1, bias=False)

    def build_input(
        self,
        encoding: QuestionEncoding,
        values: Sequence[NumericValue],
        encoder: FrozenTextEncoder,
        relevance: Optional[Sequence[float]] = None,
    ) -> NTInput:
        if not values:
            raise DataValidationError("entrada do NumericalTransformer sem números")
        kept = list(range(len(values)))
        truncation = None
        if len(values) > self.n_max:
            scores = relevance if relevance is not None else [0.0] * len(values)
            ranked = sorted(kept, key=lambda i: (-scores[i], i))
            kept = sorted(ranked[: self.n_max])
            truncation = TruncationReport(requested=len(values), kept=len(kept))
            logger.debug(f"NT: {truncation.dropped} números descartados por relevância")
        chosen = tuple(values[i] for i in kept)

        words = self.question_projection(encoding.word_vectors)
        words = words + sinusoidal_positions(words.shape[0], self.d_h, words.dtype)
        separator = self.question_projection(encoder.separator_vector().to(words.dtype)).unsqueeze(0)
        numbers = self.number_encoder(encoder.number_features(chosen, self.number_encoder.mode).to(words.dtype))
        layout = NTLayout(n_question=words.shape[0], m_numbers=len(chosen))
        return NTInput(
            rows=torch.cat([words, separator, numbers]),
            layout=layout,
            sort_keys=torch.tensor([value.sort_key for value in chosen], dtype=torch.float64),
            values=chosen,
            kept=tuple(kept),
            truncation=truncation,
        )

    def mask_for(self, nt_input: NTInput) -> Tensor:
        return build_mask(nt_input.layout, nt_input.sort_keys, self.sam, nt_input.rows.dtype)

    def encode(self, hidden: Tensor, mask: Tensor) -> Tensor:
        """Aplica as L camadas; aceita (n x d_h) ou lote (B x n x d_h)."""
        if tuple(mask.shape[-2:]) != (hidden.shape[-2], hidden.shape[-2]):
            raise ShapeError("máscara com lado diferente da entrada", mask=tuple(mask.shape), rows=hidden.shape[-2])
        for layer in self.layers:
            hidden = layer(hidden, mask)
        return hidden

    def forward(self, inputs: Sequence[NTInput], masks: Optional[Sequence[Tensor]] = None) -> List[Tensor]:
        """Embeddings de saída dos números (m x d_h) para cada entrada do lote."""
        if masks is None:
            masks = [self.mask_for(nt_input) for nt_input in inputs]
        if len(inputs) == 1:
            outputs = self.encode(inputs[0].rows, masks[0]).unsqueeze(0)
        else:
            hidden = pad_sequence([nt_input.rows for nt_input in inputs], batch_first=True)
            outputs = self.encode(hidden, batch_masks(masks))
        return [outputs[i, nt_input.layout.numbers] for i, nt_input in enumerate(inputs)]

    def pretrain_scores(self, numbers: Tensor) -> Tensor:
        """W_pretrain^T v_i, antes da sigmoide."""
        return self.pretrain_head(numbers).squeeze(-1)


def nt_forward(model: NumericalTransformer, nt_input: NTInput, mask: Optional[Tensor] = None) -> Tensor:
    return model([nt_input], None if mask is None else [mask])[0]
