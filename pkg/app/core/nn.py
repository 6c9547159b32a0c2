"""
Primitivas numéricas compartilhadas por todos os módulos treináveis.

Tensores são `torch.Tensor`; aqui ficam o softmax com máscara aditiva, a
atenção mascarada multi-cabeça, o conjunto de parâmetros agrupado em
Φ (básico), Θ (numérico), Ψ (abrangente) e o classificador, o passo de
otimização com congelamento por grupo e a checagem de gradiente por
diferenças centrais.
"""
import enum
import hashlib
import logging
import math
import random
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Tuple, Union

import torch
from torch import Tensor, nn

from app.core.exceptions import ContractViolation, GradCheckError, ShapeError, UsageError

logger = logging.getLogger(__name__)

# Sentinela aditivo no lugar de -inf: evita NaN e produz peso < 1e-38
MASK_SENTINEL = -1e9


class ParameterGroup(str, enum.Enum):
    BASIC = "phi"
    NUMERICAL = "theta"
    COMPREHENSIVE = "psi"
    CLASSIFIER = "classifier"


def seed_everything(seed: int) -> None:
    random.seed(seed)
    torch.manual_seed(seed)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax ao longo de `axis`; posições com o sentinela recebem peso 0."""
    if not -x.dim() <= axis < x.dim():
        raise ShapeError("eixo fora do intervalo", axis=axis, shape=tuple(x.shape))
    return torch.softmax(x, dim=axis)


def sinusoidal_positions(length: int, dim: int, dtype: torch.dtype = torch.float32) -> Tensor:
    """Codificação posicional senoidal clássica, (length x dim)."""
    if dim % 2:
        raise ShapeError("largura da codificação posicional deve ser par", dim=dim)
    position = torch.arange(length, dtype=dtype).unsqueeze(1)
    div_term = torch.exp(torch.arange(0, dim, 2, dtype=dtype) * (-math.log(10000.0) / dim))
    encoding = torch.zeros(length, dim, dtype=dtype)
    encoding[:, 0::2] = torch.sin(position * div_term)
    encoding[:, 1::2] = torch.cos(position * div_term)
    return encoding


def masked_attention(
    hidden: Tensor,
    w_query: Tensor,
    w_key: Tensor,
    w_value: Tensor,
    mask: Tensor,
    heads: int,
    return_weights: bool = False,
) -> Union[Tensor, Tuple[Tensor, Tensor]]:
    """
    Atenção multi-cabeça com máscara aditiva:
    A = softmax(Q K^T / sqrt(d_k) + M) V por cabeça, cabeças concatenadas.

    Aceita `hidden` (n x d_h) ou em lote (B x n x d_h); a máscara é (n x n)
    ou (B x n x n) com entradas 0 ou MASK_SENTINEL.
    """
    *batch, n_tok, d_model = hidden.shape
    if tuple(mask.shape[-2:]) != (n_tok, n_tok):
        raise ShapeError("máscara deve ser quadrada com lado n_tok", mask=tuple(mask.shape), n_tok=n_tok)
    width = w_query.shape[-1]
    if width % heads:
        raise ShapeError("largura da projeção não é divisível pelo número de cabeças", width=width, heads=heads)
    permitted = mask > MASK_SENTINEL / 2
    if not bool(permitted.any(dim=-1).all()):
        raise ContractViolation("linha da máscara sem nenhuma coluna permitida")

    d_k = width // heads

    def split(projected: Tensor) -> Tensor:
        return projected.reshape(*batch, n_tok, heads, d_k).transpose(-3, -2)

    query = split(hidden @ w_query)
    key = split(hidden @ w_key)
    value = split(hidden @ w_value)
    scores = query @ key.transpose(-2, -1) / math.sqrt(d_k) + mask.unsqueeze(-3)
    weights = softmax(scores, axis=-1)
    output = (weights @ value).transpose(-3, -2).reshape(*batch, n_tok, width)
    if return_weights:
        return output, weights
    return output


class ParameterSet:
    """Mapa caminho -> parâmetro, cada caminho marcado com seu grupo."""

    def __init__(self, entries: Mapping[str, Tuple[ParameterGroup, nn.Parameter]]):
        self._entries: Dict[str, Tuple[ParameterGroup, nn.Parameter]] = dict(entries)
        self._frozen: Dict[ParameterGroup, bool] = {}

    @classmethod
    def from_modules(cls, modules: Mapping[ParameterGroup, nn.Module]) -> "ParameterSet":
        entries: Dict[str, Tuple[ParameterGroup, nn.Parameter]] = {}
        seen = set()
        for group, module in modules.items():
            for name, parameter in module.named_parameters():
                # Parâmetros compartilhados entre módulos ficam no primeiro grupo
                if id(parameter) in seen:
                    continue
                seen.add(id(parameter))
                path = f"{group.value}.{name}"
                if path in entries:
                    raise UsageError("caminho de parâmetro duplicado", path=path)
                entries[path] = (group, parameter)
        return cls(entries)

    def __contains__(self, path: str) -> bool:
        return path in self._entries

    def __getitem__(self, path: str) -> nn.Parameter:
        return self._entries[path][1]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def items(self) -> Iterator[Tuple[str, nn.Parameter]]:
        for path, (_, parameter) in self._entries.items():
            yield path, parameter

    def group_of(self, path: str) -> ParameterGroup:
        return self._entries[path][0]

    def parameters(self, group: Optional[ParameterGroup] = None, trainable_only: bool = False) -> List[nn.Parameter]:
        selected = []
        for entry_group, parameter in self._entries.values():
            if group is not None and entry_group != group:
                continue
            if trainable_only and (self.is_frozen(entry_group) or not parameter.requires_grad):
                continue
            selected.append(parameter)
        return selected

    def freeze(self, group: ParameterGroup) -> None:
        self._frozen[group] = True
        for parameter in self.parameters(group):
            parameter.requires_grad_(False)
            parameter.grad = None

    def unfreeze(self, group: ParameterGroup) -> None:
        self._frozen[group] = False
        for parameter in self.parameters(group):
            parameter.requires_grad_(True)

    def is_frozen(self, group: ParameterGroup) -> bool:
        return self._frozen.get(group, False)

    def fingerprint(self, group: ParameterGroup) -> str:
        """Hash dos bytes do grupo, usado para verificar o contrato de congelamento."""
        digest = hashlib.sha256()
        for path, (entry_group, parameter) in sorted(self._entries.items()):
            if entry_group != group:
                continue
            digest.update(path.encode("utf-8"))
            digest.update(parameter.detach().cpu().contiguous().numpy().tobytes())
        return digest.hexdigest()


@dataclass
class OptimizerState:
    learning_rate: float
    optimizer: torch.optim.Optimizer
    kind: str = "adam"
    step: int = 0


def build_optimizer(params: ParameterSet, learning_rate: float = 0.0001, kind: str = "adam") -> OptimizerState:
    """Adam por padrão; 'sgd' é a descida de gradiente simples usada nos testes."""
    trainable = params.parameters(trainable_only=True)
    if not trainable:
        raise UsageError("nenhum parâmetro treinável para otimizar")
    if kind == "adam":
        optimizer = torch.optim.Adam(trainable, lr=learning_rate)
    elif kind == "sgd":
        optimizer = torch.optim.SGD(trainable, lr=learning_rate)
    else:
        raise UsageError("otimizador desconhecido", kind=kind)
    return OptimizerState(learning_rate=learning_rate, optimizer=optimizer, kind=kind)


def optimize_step(
    params: ParameterSet,
    grads: Optional[Mapping[str, Tensor]],
    state: OptimizerState,
) -> OptimizerState:
    """
    Aplica um passo do otimizador.

    `grads` explícitos (caminho -> tensor) substituem os `.grad` acumulados;
    com None usa os gradientes já calculados por `backward()`. Grupos
    congelados nunca são atualizados.
    """
    if grads is not None:
        for path, grad in grads.items():
            if path not in params:
                raise ShapeError("gradiente para parâmetro desconhecido", path=path)
            parameter = params[path]
            if tuple(grad.shape) != tuple(parameter.shape):
                raise ShapeError(
                    "forma do gradiente difere do parâmetro",
                    path=path,
                    grad=tuple(grad.shape),
                    param=tuple(parameter.shape),
                )
            parameter.grad = grad.detach().to(parameter.dtype).clone()
    for path, parameter in params.items():
        if params.is_frozen(params.group_of(path)) or not parameter.requires_grad:
            parameter.grad = None
    state.optimizer.step()
    state.optimizer.zero_grad(set_to_none=True)
    state.step += 1
    return state


def grad_check(
    fn: Callable[[], Tensor],
    params: Union[ParameterSet, Mapping[str, Tensor]],
    epsilon: float = 1e-5,
    samples: int = 8,
    atol: float = 0.0,
    seed: int = 0,
) -> float:
    """
    Compara o gradiente analítico (autograd) com diferenças centrais.

    Retorna o máximo, sobre coordenadas sorteadas, de
    |analítico - numérico| / max(1e-8, |analítico| + |numérico|).
    Coordenadas com |analítico| + |numérico| < atol são ignoradas.
    """
    named = list(params.items())
    tensors = [(path, tensor) for path, tensor in named if tensor.requires_grad]
    if not tensors:
        raise UsageError("nenhum tensor com requires_grad para checar")
    for path, tensor in tensors:
        if tensor.dtype != torch.float64:
            raise UsageError("checagem de gradiente exige float64", path=path, dtype=str(tensor.dtype))

    loss = fn()
    if not torch.isfinite(loss).all():
        raise GradCheckError("função não finita no ponto base", value=float(loss))
    analytic = torch.autograd.grad(loss, [tensor for _, tensor in tensors], allow_unused=True)

    generator = torch.Generator().manual_seed(seed)
    worst = 0.0
    for (path, tensor), grad in zip(tensors, analytic):
        flat_grad = torch.zeros(tensor.numel(), dtype=torch.float64) if grad is None else grad.reshape(-1)
        count = min(samples, tensor.numel())
        coordinates = torch.randperm(tensor.numel(), generator=generator)[:count].tolist()
        flat = tensor.data.view(-1)
        for coordinate in coordinates:
            original = flat[coordinate].item()
            with torch.no_grad():
                flat[coordinate] = original + epsilon
                plus = float(fn())
                flat[coordinate] = original - epsilon
                minus = float(fn())
                flat[coordinate] = original
            if not (math.isfinite(plus) and math.isfinite(minus)):
                raise GradCheckError("função não finita na perturbação", path=path, coordinate=coordinate)
            numeric = (plus - minus) / (2 * epsilon)
            exact = float(flat_grad[coordinate])
            magnitude = abs(exact) + abs(numeric)
            if magnitude < atol:
                continue
            error = abs(exact - numeric) / max(1e-8, magnitude)
            worst = max(worst, error)
    logger.debug(f"grad_check: erro relativo máximo {worst:.3e}")
    return worst
