"""
Testes das primitivas numéricas: softmax, atenção mascarada, otimização e
checagem de gradiente.
"""
import math

import pytest
import torch
from torch import nn

from app.core.exceptions import ContractViolation, GradCheckError, ShapeError, UsageError
from app.core.nn import (
    MASK_SENTINEL,
    ParameterGroup,
    ParameterSet,
    build_optimizer,
    grad_check,
    masked_attention,
    optimize_step,
    sinusoidal_positions,
    softmax,
)


class TestSoftmax:
    """Testes do softmax com sentinela aditivo."""

    def test_symmetric_input(self):
        """Teste [0, 0] -> [0.5, 0.5]."""
        result = softmax(torch.tensor([0.0, 0.0]))
        assert torch.allclose(result, torch.tensor([0.5, 0.5]))

    def test_masked_position_gets_zero(self):
        """Teste que a posição com sentinela recebe peso zero."""
        result = softmax(torch.tensor([5.0, MASK_SENTINEL]))
        assert result[0].item() == pytest.approx(1.0)
        assert result[1].item() == 0.0

    def test_matches_direct_formula(self):
        """Teste contra exp/normalização em float64."""
        x = torch.randn(6, dtype=torch.float64)
        expected = [math.exp(v) for v in x.tolist()]
        total = sum(expected)
        assert torch.allclose(softmax(x), torch.tensor([v / total for v in expected], dtype=torch.float64), atol=1e-12)

    def test_rows_sum_to_one(self):
        """Teste que as linhas somam 1."""
        result = softmax(torch.randn(4, 7), axis=-1)
        assert torch.allclose(result.sum(dim=-1), torch.ones(4), atol=1e-6)

    def test_axis_out_of_range(self):
        """Teste erro de forma para eixo inválido."""
        with pytest.raises(ShapeError):
            softmax(torch.zeros(3), axis=2)


class TestMaskedAttention:
    """Testes da atenção multi-cabeça com máscara."""

    def test_unmasked_matches_double_loop(self):
        """Teste máscara nula e projeções identidade contra laço O(n²)."""
        hidden = torch.randn(4, 3, dtype=torch.float64)
        eye = torch.eye(3, dtype=torch.float64)
        mask = torch.zeros(4, 4, dtype=torch.float64)
        output = masked_attention(hidden, eye, eye, eye, mask, heads=1)

        for i in range(4):
            scores = [float(hidden[i] @ hidden[j]) / math.sqrt(3) for j in range(4)]
            peak = max(scores)
            weights = [math.exp(s - peak) for s in scores]
            total = sum(weights)
            expected = sum((w / total) * hidden[j] for j, w in enumerate(weights))
            assert torch.allclose(output[i], expected, atol=1e-10)

    def test_self_only_row(self):
        """Teste linha que só vê a si mesma: saída é o valor projetado do token."""
        hidden = torch.randn(3, 4)
        w_q, w_k, w_v = (torch.randn(4, 4) for _ in range(3))
        mask = torch.zeros(3, 3)
        mask[1] = MASK_SENTINEL
        mask[1, 1] = 0.0
        output = masked_attention(hidden, w_q, w_k, w_v, mask, heads=2)
        assert torch.allclose(output[1], hidden[1] @ w_v, atol=1e-6)

    def test_identical_rows_identical_outputs(self):
        """Teste determinismo funcional para linhas idênticas."""
        row = torch.randn(4)
        hidden = torch.stack([row, torch.randn(4), row])
        w = torch.randn(4, 4)
        output = masked_attention(hidden, w, w, w, torch.zeros(3, 3), heads=2)
        assert torch.allclose(output[0], output[2])

    def test_attention_weights_rows_sum_to_one(self):
        """Teste que os pesos de atenção somam 1 por linha."""
        hidden = torch.randn(5, 4)
        w = torch.randn(4, 4)
        _, weights = masked_attention(hidden, w, w, w, torch.zeros(5, 5), heads=2, return_weights=True)
        assert torch.allclose(weights.sum(dim=-1), torch.ones(2, 5), atol=1e-6)

    def test_fully_masked_row_is_contract_violation(self):
        """Teste linha de máscara sem coluna permitida."""
        mask = torch.zeros(2, 2)
        mask[0] = MASK_SENTINEL
        w = torch.eye(2)
        with pytest.raises(ContractViolation):
            masked_attention(torch.randn(2, 2), w, w, w, mask, heads=1)

    def test_non_square_mask(self):
        """Teste erro de forma com máscara do tamanho errado."""
        w = torch.eye(2)
        with pytest.raises(ShapeError):
            masked_attention(torch.randn(3, 2), w, w, w, torch.zeros(2, 2), heads=1)


class TestOptimizer:
    """Testes do passo de otimização e do congelamento de grupos."""

    def _quadratic(self, value):
        module = nn.Module()
        module.w = nn.Parameter(torch.tensor([value], dtype=torch.float64))
        return module, ParameterSet.from_modules({ParameterGroup.BASIC: module})

    def test_sgd_step_hand_arithmetic(self):
        """Teste f(w)=w², w=1, lr=0.1 -> w=0.8."""
        module, params = self._quadratic(1.0)
        state = build_optimizer(params, learning_rate=0.1, kind="sgd")
        (module.w ** 2).sum().backward()
        optimize_step(params, None, state)
        assert module.w.item() == pytest.approx(0.8)
        assert state.step == 1

    def test_explicit_gradients(self):
        """Teste gradientes explícitos por caminho."""
        module, params = self._quadratic(1.0)
        state = build_optimizer(params, learning_rate=0.5, kind="sgd")
        optimize_step(params, {"phi.w": torch.tensor([2.0])}, state)
        assert module.w.item() == pytest.approx(0.0)

    def test_gradient_shape_mismatch_names_path(self):
        """Teste erro de forma nomeando o caminho do parâmetro."""
        _, params = self._quadratic(1.0)
        state = build_optimizer(params, kind="sgd")
        with pytest.raises(ShapeError) as excinfo:
            optimize_step(params, {"phi.w": torch.zeros(2)}, state)
        assert excinfo.value.context["path"] == "phi.w"

    def test_frozen_group_untouched(self):
        """Teste que Θ congelado mantém os bytes após o passo."""
        basic, numerical = nn.Linear(2, 2), nn.Linear(2, 2)
        params = ParameterSet.from_modules({ParameterGroup.BASIC: basic, ParameterGroup.NUMERICAL: numerical})
        params.freeze(ParameterGroup.NUMERICAL)
        before = params.fingerprint(ParameterGroup.NUMERICAL)
        state = build_optimizer(params, learning_rate=0.1, kind="sgd")
        (basic(torch.ones(2)).sum() + numerical(torch.ones(2)).sum()).backward()
        optimize_step(params, None, state)
        assert params.fingerprint(ParameterGroup.NUMERICAL) == before

    def test_descent_converges_on_quadratic(self):
        """Teste convergência em quadrática 2-d para o minimizador."""
        module = nn.Module()
        module.w = nn.Parameter(torch.tensor([3.0, -2.0], dtype=torch.float64))
        params = ParameterSet.from_modules({ParameterGroup.BASIC: module})
        state = build_optimizer(params, learning_rate=0.1, kind="sgd")
        target = torch.tensor([1.0, 0.5], dtype=torch.float64)
        for _ in range(100):
            ((module.w - target) ** 2).sum().backward()
            optimize_step(params, None, state)
        assert torch.allclose(module.w.detach(), target, atol=1e-3)

    def test_no_trainable_parameters(self):
        """Teste erro quando tudo está congelado."""
        _, params = self._quadratic(1.0)
        params.freeze(ParameterGroup.BASIC)
        with pytest.raises(UsageError):
            build_optimizer(params)

    def test_default_learning_rate(self):
        """Teste taxa de aprendizado padrão 0.0001."""
        _, params = self._quadratic(1.0)
        assert build_optimizer(params).learning_rate == 0.0001


class TestGradCheck:
    """Testes da checagem por diferenças centrais."""

    def test_polynomial(self):
        """Teste f(w)=w² em w=3."""
        w = torch.tensor([3.0], dtype=torch.float64, requires_grad=True)
        assert grad_check(lambda: (w ** 2).sum(), {"w": w}) < 1e-6

    def test_requires_float64(self):
        """Teste que float32 é recusado."""
        w = torch.tensor([3.0], requires_grad=True)
        with pytest.raises(UsageError):
            grad_check(lambda: (w ** 2).sum(), {"w": w})

    def test_non_finite_function(self):
        """Teste falha reportada para função não finita."""
        w = torch.tensor([0.0], dtype=torch.float64, requires_grad=True)
        with pytest.raises(GradCheckError):
            grad_check(lambda: (1.0 / w).sum(), {"w": w})

    def test_linear_layer(self):
        """Teste de uma camada linear com perda quadrática."""
        layer = nn.Linear(3, 2).double()
        x = torch.randn(4, 3, dtype=torch.float64)
        params = dict(layer.named_parameters())
        assert grad_check(lambda: (layer(x) ** 2).sum(), params) < 1e-4


class TestPositions:
    """Testes da codificação posicional."""

    def test_shape_and_first_row(self):
        """Teste forma e posição zero (sen=0, cos=1)."""
        encoding = sinusoidal_positions(5, 8)
        assert encoding.shape == (5, 8)
        assert torch.allclose(encoding[0, 0::2], torch.zeros(4))
        assert torch.allclose(encoding[0, 1::2], torch.ones(4))

    def test_odd_width(self):
        """Teste largura ímpar recusada."""
        with pytest.raises(ShapeError):
            sinusoidal_positions(3, 5)
