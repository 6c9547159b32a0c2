"""
Testes do NumericalTransformer: máscara ordenada por valor, propriedades de
permutação e duplicatas, e truncamento da entrada.
"""
import random

import pytest
import torch

from app.core.exceptions import DataValidationError, ShapeError
from app.core.nn import MASK_SENTINEL
from app.kb.models import RelationKind, RelationMeta
from app.kb.normalize import normalize_value
from app.reasoning.numerical import NTLayout, NumericalTransformer, batch_masks, build_mask, nt_forward

COUNT = RelationMeta("music.album.num_of_tracks", True, RelationKind.SIZE, "count")
QUESTION = "Which album is the latest ?"


def _values(*raws):
    return [normalize_value(raw, COUNT) for raw in raws]


def _mask_oracle(layout, keys):
    first_number = layout.n_question + 1

    def visible(row, column):
        if column <= layout.separator:
            return True
        return row >= first_number and keys[row - first_number] > keys[column - first_number]

    return torch.tensor(
        [[0.0 if visible(row, column) else MASK_SENTINEL for column in range(layout.size)] for row in range(layout.size)]
    )


@pytest.fixture
def transformer():
    return NumericalTransformer(d_enc=16, d_h=16, layers=2, heads=2).eval()


class TestBuildMask:
    """Testes da máscara de atenção ordenada por valor."""

    def test_three_numbers(self):
        """Teste chaves [3, 1, 2] com n=2 contra o oráculo elemento a elemento."""
        layout = NTLayout(n_question=2, m_numbers=3)
        keys = [3.0, 1.0, 2.0]
        mask = build_mask(layout, torch.tensor(keys))
        assert torch.equal(mask, _mask_oracle(layout, keys))
        # O número de chave 3 vê os de chave 1 e 2
        assert mask[3, 4] == 0.0 and mask[3, 5] == 0.0
        # O menor número vê só palavras e [SEP]
        assert (mask[4, 3:] == MASK_SENTINEL).all()

    def test_ties_are_invisible(self):
        """Teste que números empatados não se veem."""
        layout = NTLayout(n_question=1, m_numbers=2)
        mask = build_mask(layout, torch.tensor([5.0, 5.0]))
        assert mask[2, 3] == MASK_SENTINEL and mask[3, 2] == MASK_SENTINEL

    def test_random_layouts_match_oracle(self):
        """Teste 1000 layouts aleatórios, com chaves repetidas, contra o oráculo."""
        rng = random.Random(7)
        for _ in range(1000):
            layout = NTLayout(n_question=rng.randint(1, 6), m_numbers=rng.randint(1, 8))
            keys = [float(rng.randint(0, 5)) for _ in range(layout.m_numbers)]
            mask = build_mask(layout, torch.tensor(keys, dtype=torch.float64))
            assert torch.equal(mask, _mask_oracle(layout, keys)), (layout, keys)

    def test_words_never_see_numbers(self):
        """Teste que palavras e [SEP] não atendem a números."""
        layout = NTLayout(n_question=3, m_numbers=4)
        mask = build_mask(layout, torch.arange(4.0))
        assert (mask[: layout.separator + 1, layout.numbers] == MASK_SENTINEL).all()

    def test_without_sam_is_full_attention(self):
        """Teste máscara nula quando SAM está desligado."""
        layout = NTLayout(n_question=2, m_numbers=2)
        assert torch.equal(build_mask(layout, torch.tensor([1.0, 2.0]), sam=False), torch.zeros(5, 5))

    def test_key_count_mismatch(self):
        """Teste número de chaves diferente de m."""
        with pytest.raises(ShapeError):
            build_mask(NTLayout(n_question=2, m_numbers=3), torch.tensor([1.0, 2.0]))

    def test_batch_padding_rows_see_themselves(self):
        """Teste empilhamento: linhas de preenchimento atendem só a si mesmas."""
        small = build_mask(NTLayout(1, 1), torch.tensor([1.0]))
        large = build_mask(NTLayout(2, 2), torch.tensor([1.0, 2.0]))
        batch = batch_masks([small, large])
        assert batch.shape == (2, 5, 5)
        assert torch.equal(batch[0, :3, :3], small)
        assert batch[0, 4, 4] == 0.0 and (batch[0, 4, :4] == MASK_SENTINEL).all()


class TestNumericalTransformer:
    """Testes das propriedades do NT com SAM."""

    def test_output_shape(self, transformer, encoder):
        """Teste uma linha d_h por número."""
        nt_input = transformer.build_input(encoder.encode_question(QUESTION), _values("15", "18", "16"), encoder)
        assert nt_input.layout.size == 5 + 1 + 3
        assert nt_forward(transformer, nt_input).shape == (3, 16)

    def test_permutation_equivariance(self, transformer, encoder):
        """Teste, em 200 sorteios, que permutar os números permuta as saídas da mesma forma."""
        encoding = encoder.encode_question(QUESTION)
        rng = random.Random(11)
        for _ in range(200):
            values = _values(*(str(rng.randint(0, 99)) for _ in range(rng.randint(1, 6))))
            order = rng.sample(range(len(values)), len(values))
            original = nt_forward(transformer, transformer.build_input(encoding, values, encoder))
            permuted = nt_forward(transformer, transformer.build_input(encoding, [values[i] for i in order], encoder))
            assert torch.allclose(permuted, original[order], atol=1e-5), order

    def test_duplicates_get_identical_embeddings(self, transformer, encoder):
        """Teste, em 200 sorteios, que valores repetidos recebem embeddings iguais."""
        encoding = encoder.encode_question(QUESTION)
        rng = random.Random(12)
        for _ in range(200):
            raws = [str(rng.randint(0, 99)) for _ in range(rng.randint(1, 5))]
            repeated = rng.randrange(len(raws))
            raws.insert(rng.randint(0, len(raws)), raws[repeated])
            outputs = nt_forward(transformer, transformer.build_input(encoding, _values(*raws), encoder))
            for i in range(len(raws)):
                for j in range(len(raws)):
                    if raws[i] == raws[j]:
                        assert torch.allclose(outputs[i], outputs[j], atol=1e-5), raws

    def test_minimum_ignores_other_numbers(self, transformer, encoder):
        """Teste, em 200 sorteios, que o menor número não depende dos demais."""
        encoding = encoder.encode_question(QUESTION)
        rng = random.Random(13)
        for _ in range(200):
            smallest = str(rng.randint(0, 20))
            first = [smallest] + [str(rng.randint(21, 999)) for _ in range(rng.randint(1, 5))]
            second = [str(rng.randint(21, 999)) for _ in range(rng.randint(0, 5))]
            second.insert(rng.randint(0, len(second)), smallest)
            first_out = nt_forward(transformer, transformer.build_input(encoding, _values(*first), encoder))
            second_out = nt_forward(transformer, transformer.build_input(encoding, _values(*second), encoder))
            assert torch.allclose(first_out[0], second_out[second.index(smallest)], atol=1e-5), (first, second)

    def test_larger_number_sees_smaller_ones(self, transformer, encoder):
        """Teste que o maior número muda quando um menor muda."""
        encoding = encoder.encode_question(QUESTION)
        first = nt_forward(transformer, transformer.build_input(encoding, _values("1", "90"), encoder))
        second = nt_forward(transformer, transformer.build_input(encoding, _values("2", "90"), encoder))
        assert not torch.allclose(first[1], second[1])

    def test_batched_matches_single(self, transformer, encoder):
        """Teste que o lote com preenchimento coincide com entradas isoladas."""
        encoding = encoder.encode_question(QUESTION)
        inputs = [
            transformer.build_input(encoding, _values("15", "18"), encoder),
            transformer.build_input(encoding, _values("4", "9", "1", "6"), encoder),
        ]
        batched = transformer(inputs)
        for nt_input, output in zip(inputs, batched):
            assert torch.allclose(output, nt_forward(transformer, nt_input), atol=1e-5)

    def test_truncation_keeps_most_relevant(self, encoder):
        """Teste n_max: mantém os mais relevantes na ordem original."""
        transformer = NumericalTransformer(d_enc=16, d_h=16, layers=1, heads=2, n_max=2)
        nt_input = transformer.build_input(
            encoder.encode_question(QUESTION),
            _values("10", "20", "30", "40"),
            encoder,
            relevance=[0.1, 0.9, 0.2, 0.8],
        )
        assert nt_input.kept == (1, 3)
        assert nt_input.truncation.requested == 4 and nt_input.truncation.dropped == 2
        assert [value.sort_key for value in nt_input.values] == [20.0, 40.0]

    def test_no_numbers(self, transformer, encoder):
        """Teste entrada sem números."""
        with pytest.raises(DataValidationError):
            transformer.build_input(encoder.encode_question(QUESTION), [], encoder)

    def test_heads_must_divide_width(self):
        """Teste d_h não divisível pelo número de cabeças."""
        with pytest.raises(ShapeError):
            NumericalTransformer(d_enc=16, d_h=10, heads=4)

    def test_pretrain_scores(self, transformer, encoder):
        """Teste um escore por número para o pré-treino."""
        outputs = nt_forward(transformer, transformer.build_input(encoder.encode_question(QUESTION), _values("1", "2", "3"), encoder))
        assert transformer.pretrain_scores(outputs).shape == (3,)
