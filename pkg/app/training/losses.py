"""
Perdas de pré-treino do NumericalTransformer: NTL (tripletos ordenados com
distância cosseno) e NPL (entropia cruzada sobre sigmoides dos números).
"""
import itertools
import math
import random
from typing import List, NamedTuple, Sequence

import torch
import torch.nn.functional as F
from torch import Tensor

from app.core.exceptions import DataValidationError

# Acima disso os tripletos são sorteados por rejeição em vez de enumerados
ENUMERATION_LIMIT = 200


class TripletSample(NamedTuple):
    small: int
    median: int
    big: int


def _ordered(keys: Sequence[float], triple) -> TripletSample:
    small, median, big = sorted(triple, key=lambda position: keys[position])
    return TripletSample(small, median, big)


def _strict(keys: Sequence[float], triplet: TripletSample) -> bool:
    return keys[triplet.small] < keys[triplet.median] < keys[triplet.big]


def sample_triplets(sort_keys: Sequence[float], k: int = 5, rng: random.Random = None) -> List[TripletSample]:
    """Até k tripletos (v_s, v_m, v_b) com chaves estritamente crescentes."""
    rng = rng or random.Random(0)
    count = len(sort_keys)
    if count < 3 or k < 1:
        return []
    if math.comb(count, 3) <= ENUMERATION_LIMIT:
        valid = [t for t in (_ordered(sort_keys, c) for c in itertools.combinations(range(count), 3)) if _strict(sort_keys, t)]
        return rng.sample(valid, min(k, len(valid)))
    chosen: List[TripletSample] = []
    seen = set()
    for _ in range(50 * k):
        if len(chosen) >= k:
            break
        triplet = _ordered(sort_keys, rng.sample(range(count), 3))
        if triplet not in seen and _strict(sort_keys, triplet):
            seen.add(triplet)
            chosen.append(triplet)
    return chosen


def cosine_distance(left: Tensor, right: Tensor) -> Tensor:
    return 1.0 - F.cosine_similarity(left, right, dim=-1)


def ntl_loss(embeddings: Tensor, triplets: Sequence[TripletSample], margin: float = 0.5) -> Tensor:
    """sum max(0, margin + D(v_s, v_m) - D(v_s, v_b)), D = 1 - cosseno."""
    if not triplets:
        return embeddings.sum() * 0.0
    index = torch.tensor(triplets, dtype=torch.long)
    return F.triplet_margin_with_distance_loss(
        embeddings[index[:, 0]],
        embeddings[index[:, 1]],
        embeddings[index[:, 2]],
        distance_function=cosine_distance,
        margin=margin,
        reduction="sum",
    )


def npl_distribution(scores: Tensor) -> Tensor:
    """p(v_i) = exp(sigmoid(s_i)) / sum_j exp(sigmoid(s_j))."""
    return torch.softmax(torch.sigmoid(scores), dim=-1)


def npl_loss(scores: Tensor, answer_index: int) -> Tensor:
    """-log p(v_q) sobre os escores W_pretrain^T v_i."""
    if not 0 <= answer_index < scores.shape[-1]:
        raise DataValidationError("answer_index fora do intervalo", answer_index=answer_index, numbers=scores.shape[-1])
    target = torch.tensor([answer_index], dtype=torch.long)
    return F.cross_entropy(torch.sigmoid(scores).unsqueeze(0), target)
