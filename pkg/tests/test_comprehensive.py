"""
Testes do raciocínio abrangente e do modelo completo.
"""
import random

import pytest
import torch

from app.core.exceptions import ConfigurationError, ShapeError
from app.core.nn import grad_check
from app.datagen.schemas import QARecord
from app.reasoning.comprehensive import (
    CandidateSet,
    ComprehensiveReasoner,
    mixture_predict,
    prune_entities,
    relation_attention,
    select_numerical_relations,
)
from app.reasoning.context import prepare_question
from app.reasoning.model import NTNSM, Prediction

LATEST_ALBUM = QARecord(
    id="q-1",
    question="Which album is the latest ?",
    topic_entities=["TaylorSwift"],
    answers=["Folklore"],
    ordinal=True,
    relation="music.album.release_date",
)


@pytest.fixture
def prepared(toy_kb, encoder):
    return prepare_question(toy_kb, LATEST_ALBUM, encoder)


def _trained_model(encoder, settings, **overrides):
    model = NTNSM.from_settings(encoder, settings.model_copy(update=overrides))
    model.classifier.trained.fill_(True)
    return model


class TestRelationSelection:
    """Testes de select_numerical_relations."""

    def test_top_k_sorted_by_cosine(self, toy_kb, encoder, prepared):
        """Teste K=1 devolve a relação de maior cosseno."""
        everything = select_numerical_relations(toy_kb, prepared.subgraph, prepared.encoding, encoder, k=3)
        best = select_numerical_relations(toy_kb, prepared.subgraph, prepared.encoding, encoder, k=1)
        assert len(best) == 1 and best[0].meta.name == everything[0].meta.name
        cosines = [score.cosine for score in everything]
        assert cosines == sorted(cosines, reverse=True)

    def test_invalid_k(self, toy_kb, encoder, prepared):
        """Teste K < 1."""
        with pytest.raises(ConfigurationError):
            select_numerical_relations(toy_kb, prepared.subgraph, prepared.encoding, encoder, k=0)


class TestPruning:
    """Testes de prune_entities."""

    def test_strictly_greater_than_mu(self):
        """Teste [0.9, 0.05, 0.5] com mu=0.05 -> {0, 2}."""
        candidates = prune_entities(torch.tensor([0.9, 0.05, 0.5]), mu=0.05)
        assert candidates.indices == (0, 2)
        assert candidates.probabilities == pytest.approx((0.9, 0.5))

    def test_mu_zero_keeps_all_positive(self):
        """Teste mu=0 mantém toda entidade com probabilidade positiva."""
        assert prune_entities(torch.tensor([0.1, 0.2]), mu=0.0).indices == (0, 1)

    def test_nothing_above_mu(self):
        """Teste conjunto vazio."""
        assert prune_entities(torch.tensor([0.01, 0.02]), mu=0.5).is_empty

    def test_mu_out_of_range(self):
        """Teste mu fora de [0, 1)."""
        with pytest.raises(ConfigurationError):
            prune_entities(torch.tensor([0.5]), mu=1.0)


class TestRelationAttention:
    """Testes da atenção sobre relações agrupada por entidade."""

    def test_sums_to_one_per_owner(self):
        """Teste que os pesos de cada entidade somam 1."""
        owners = torch.tensor([0, 0, 1, 2, 2, 2])
        weights = relation_attention(torch.randn(6), owners, 3)
        totals = torch.zeros(3).index_add(0, owners, weights)
        assert torch.allclose(totals, torch.ones(3), atol=1e-6)

    def test_matches_plain_softmax(self):
        """Teste um único dono contra torch.softmax."""
        logits = torch.tensor([1.0, 2.0, 3.0])
        assert torch.allclose(relation_attention(logits, torch.zeros(3, dtype=torch.long), 1), torch.softmax(logits, dim=0))

    def test_large_logits_are_stable(self):
        """Teste logits grandes sem overflow."""
        weights = relation_attention(torch.tensor([1000.0, 1001.0]), torch.tensor([0, 0]), 1)
        assert torch.isfinite(weights).all()


class TestComprehensiveReasoner:
    """Testes da fusão numérica e da predição abrangente."""

    def test_entity_without_facts_uses_zero_vector(self):
        """Teste ẽ nulo para entidade sem fatos numéricos."""
        reasoner = ComprehensiveReasoner(d_enc=4, d_h=6)
        embeddings = torch.randn(2, 6)
        fused = reasoner.integrate_and_fuse(
            embeddings,
            torch.tensor([0]),
            torch.randn(1, 4),
            torch.tensor([0.3]),
            torch.randn(1, 6),
        )
        expected = reasoner.integration(torch.cat([embeddings[1], torch.zeros(6)]))
        assert torch.allclose(fused[1], expected, atol=1e-6)

    def test_non_candidates_keep_basic_probability(self):
        """Teste que entidades podadas mantêm p_basic."""
        reasoner = ComprehensiveReasoner(d_enc=4, d_h=6)
        basic = torch.tensor([0.9, 0.01, 0.6])
        probs = reasoner(
            torch.randn(3, 6),
            basic,
            (0, 2),
            torch.tensor([0, 1]),
            torch.randn(2, 4),
            torch.tensor([0.1, 0.2]),
            torch.randn(2, 6),
        )
        assert probs[1] == basic[1]
        assert probs.shape == (3,)

    def test_without_candidates_returns_basic(self):
        """Teste sem candidatos: probabilidade básica inalterada."""
        basic = torch.tensor([0.2, 0.3])
        empty = torch.zeros(0, dtype=torch.long)
        assert torch.equal(ComprehensiveReasoner(4, 6)(torch.randn(2, 6), basic, (), empty, torch.zeros(0, 4), torch.zeros(0), torch.zeros(0, 6)), basic)

    def test_wrong_entity_width(self):
        """Teste largura das entidades diferente de d_h."""
        with pytest.raises(ShapeError):
            ComprehensiveReasoner(4, 6).integrate_and_fuse(torch.randn(2, 5), torch.zeros(0, dtype=torch.long), torch.zeros(0, 4), torch.zeros(0), torch.zeros(0, 6))


class TestMixture:
    """Testes da mistura final pelo tipo de pergunta."""

    def test_hand_arithmetic(self):
        """Teste p_o=0.8, p_c=0.9, p_b=0.2 -> 0.76."""
        assert float(mixture_predict(torch.tensor(0.2), torch.tensor(0.9), 0.8)) == pytest.approx(0.76)

    def test_extremes(self):
        """Teste p_o=0 devolve p_b e p_o=1 devolve p_c."""
        basic, comprehensive = torch.tensor([0.1, 0.7]), torch.tensor([0.6, 0.3])
        assert torch.allclose(mixture_predict(basic, comprehensive, 0.0), basic)
        assert torch.allclose(mixture_predict(basic, comprehensive, 1.0), comprehensive)


class TestFusionGradients:
    """Checagem de gradiente em float64 da fusão numérica e da mistura."""

    def test_fusion_and_mixture_match_finite_differences(self):
        """Teste -log p_final da resposta em 20 instâncias aleatórias: Ψ e entradas da fusão."""
        generator = torch.Generator().manual_seed(5)
        rng = random.Random(5)
        for instance in range(20):
            reasoner = ComprehensiveReasoner(d_enc=4, d_h=6).double()
            entities = rng.randint(1, 5)
            candidates = tuple(sorted(rng.sample(range(entities), rng.randint(1, entities))))
            facts = rng.randint(0, 6)
            owners = torch.tensor([rng.randrange(len(candidates)) for _ in range(facts)], dtype=torch.long)
            inputs = {
                "entity_embeddings": torch.randn(entities, 6, generator=generator, dtype=torch.float64),
                "fact_relations": torch.randn(facts, 4, generator=generator, dtype=torch.float64),
                "fact_logits": torch.randn(facts, generator=generator, dtype=torch.float64),
                "fact_numbers": torch.randn(facts, 6, generator=generator, dtype=torch.float64),
                "basic_probs": torch.rand(entities, generator=generator, dtype=torch.float64) * 0.8 + 0.1,
                "p_ordinal": torch.rand((), generator=generator, dtype=torch.float64) * 0.8 + 0.1,
            }
            for tensor in inputs.values():
                tensor.requires_grad_()
            answer = rng.randrange(entities)

            def loss():
                comprehensive = reasoner(
                    inputs["entity_embeddings"],
                    inputs["basic_probs"],
                    candidates,
                    owners,
                    inputs["fact_relations"],
                    inputs["fact_logits"],
                    inputs["fact_numbers"],
                )
                final = mixture_predict(inputs["basic_probs"], comprehensive, inputs["p_ordinal"])
                return -torch.log(final[answer])

            params = {**dict(reasoner.named_parameters()), **inputs}
            assert grad_check(loss, params, samples=16, atol=1e-7, seed=instance) < 1e-4, instance


class TestNTNSM:
    """Testes do modelo completo sobre a KB de teste."""

    def test_full_forward(self, encoder, small_settings, prepared):
        """Teste caminho completo com todos os álbuns como candidatos."""
        model = _trained_model(encoder, small_settings, mu=0.0)
        prediction = model(prepared)
        assert not prediction.fallback
        assert len(prediction.candidates) == 4
        assert prediction.p_final.shape == (4,)
        assert ((prediction.p_final > 0) & (prediction.p_final < 1)).all()
        assert 0.0 <= prediction.p_ordinal <= 1.0

    def test_final_is_the_mixture(self, encoder, small_settings, prepared):
        """Teste p_final = p_o p_c + (1 - p_o) p_b."""
        prediction = _trained_model(encoder, small_settings, mu=0.0)(prepared)
        expected = mixture_predict(prediction.p_basic, prediction.p_comprehensive, prediction.p_ordinal)
        assert torch.allclose(prediction.p_final, expected)

    def test_fallback_without_candidates(self, encoder, small_settings, prepared):
        """Teste mu acima de toda probabilidade: predição básica."""
        prediction = _trained_model(encoder, small_settings, mu=0.999999)(prepared)
        assert prediction.fallback and prediction.candidates.is_empty
        assert torch.equal(prediction.p_final, prediction.p_basic)

    def test_basic_only_model(self, encoder, small_settings, prepared):
        """Teste variante sem raciocínio numérico."""
        prediction = _trained_model(encoder, small_settings, numerical=False)(prepared)
        assert prediction.p_ordinal == 0.0
        assert torch.equal(prediction.p_final, prediction.p_basic)

    def test_numerical_transformer_gets_no_gradient(self, encoder, small_settings, prepared):
        """Teste que Θ não recebe gradiente da perda final."""
        model = _trained_model(encoder, small_settings, mu=0.0)
        model(prepared).p_final.sum().backward()
        assert all(parameter.grad is None for parameter in model.numerical.parameters())
        assert any(parameter.grad is not None for parameter in model.comprehensive.parameters())

    def test_top_entity_tie_breaks_on_id(self):
        """Teste empate resolvido pelo menor id de entidade."""
        scores = torch.tensor([0.7, 0.7, 0.1])
        prediction = Prediction(("b", "a", "c"), scores, scores, scores, 0.0, CandidateSet((), ()), True)
        assert prediction.top_entity() == "a"
