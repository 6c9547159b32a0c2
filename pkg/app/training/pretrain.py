"""
Etapas de pré-treino: raciocinador básico em QA real,
NumericalTransformer em QIND e depois QGND, e o classificador de tipo de
pergunta.
"""
import copy
import logging
import random
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F

from app.core.config import Settings
from app.core.exceptions import ConfigurationError, EvaluationError
from app.core.nn import ParameterGroup, ParameterSet, build_optimizer, optimize_step, seed_everything
from app.datagen.models import PretrainInstance
from app.datagen.schemas import QARecord
from app.encoders.services import FrozenTextEncoder, QuestionTypeClassifier
from app.reasoning.basic import BasicReasoner
from app.reasoning.context import PreparedQuestion
from app.reasoning.numerical import NumericalTransformer
from .losses import npl_loss, ntl_loss, sample_triplets
from .schemas import CoverageCounts

logger = logging.getLogger(__name__)


@dataclass
class StageHistory:
    """Perda média e tempo de cada época de um estágio."""

    name: str
    losses: List[float] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)
    validation: List[float] = field(default_factory=list)


def _batches(items: Sequence, size: int, generator: torch.Generator):
    order = torch.randperm(len(items), generator=generator).tolist()
    for start in range(0, len(order), size):
        yield [items[i] for i in order[start:start + size]]


def instance_loss(
    model: NumericalTransformer,
    instance: PretrainInstance,
    numbers: torch.Tensor,
    config: Settings,
    rng: random.Random,
) -> torch.Tensor:
    loss = numbers.sum() * 0.0
    if config.npl:
        loss = loss + npl_loss(model.pretrain_scores(numbers), instance.answer_index)
    if config.ntl:
        triplets = sample_triplets(instance.sort_keys, config.triplets_per_instance, rng)
        loss = loss + config.ntl_weight * ntl_loss(numbers, triplets, config.margin)
    return loss


def pretrain_nt(
    model: NumericalTransformer,
    encoder: FrozenTextEncoder,
    qind: Sequence[PretrainInstance],
    qgnd: Sequence[PretrainInstance],
    config: Settings,
    validation: Optional[Sequence[PretrainInstance]] = None,
) -> List[StageHistory]:
    """
    Treina Θ e W_pretrain com NPL + λ·NTL, primeiro no QIND e depois no
    QGND; cada estágio começa com um otimizador novo e mantém Θ.

    Com `validation`, cada estágio para após `config.patience` épocas sem
    melhora da acurácia e termina com os pesos da melhor época.
    """
    if not (config.npl or config.ntl):
        raise ConfigurationError("NPL e NTL desligadas: nada a otimizar no pré-treino")
    stages = [(name, data) for name, data, enabled in (("qind", qind, config.qind), ("qgnd", qgnd, config.qgnd)) if enabled]
    if not stages:
        raise ConfigurationError("pré-treino ligado com QIND e QGND desligados")
    stages = [(name, data) for name, data in stages if data]
    if not stages:
        raise ConfigurationError("conjuntos de pré-treino vazios")

    seed_everything(config.seed)
    params = ParameterSet.from_modules({ParameterGroup.NUMERICAL: model})
    rng = random.Random(config.seed)
    generator = torch.Generator().manual_seed(config.seed)
    histories = []
    for name, data in stages:
        state = build_optimizer(params, config.learning_rate, config.optimizer)
        history = StageHistory(name=name)
        best_state: Dict[str, torch.Tensor] = {}
        best_accuracy = -1.0
        stale = 0
        for epoch in range(config.pretrain_epochs):
            started = time.perf_counter()
            model.train()
            total = 0.0
            for batch in _batches(data, config.pretrain_batch_size, generator):
                inputs = [model.build_input(encoder.encode_question(item.q), item.values, encoder) for item in batch]
                outputs = model(inputs)
                loss = sum(instance_loss(model, item, numbers, config, rng) for item, numbers in zip(batch, outputs)) / len(batch)
                loss.backward()
                optimize_step(params, None, state)
                total += float(loss) * len(batch)
            history.losses.append(total / len(data))
            history.seconds.append(time.perf_counter() - started)
            message = f"{name} época {epoch + 1}/{config.pretrain_epochs}: perda {history.losses[-1]:.4f}"
            if validation:
                history.validation.append(evaluate_pretrain(model, encoder, validation))
                message += f", acurácia val {history.validation[-1]:.3f}"
            logger.info(f"{message} ({history.seconds[-1]:.1f}s)")
            if not validation:
                continue
            if history.validation[-1] > best_accuracy:
                best_accuracy = history.validation[-1]
                best_state = copy.deepcopy(model.state_dict())
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    logger.info(f"{name}: parada antecipada na época {epoch + 1} (melhor acurácia {best_accuracy:.3f})")
                    break
        if best_state:
            model.load_state_dict(best_state)
        histories.append(history)
    model.eval()
    return histories


@torch.no_grad()
def evaluate_pretrain(model: NumericalTransformer, encoder: FrozenTextEncoder, instances: Sequence[PretrainInstance]) -> float:
    """Fração das instâncias em que argmax_j p(v_j) é o número correto (empate: menor índice)."""
    if not instances:
        raise EvaluationError("nenhuma instância de pré-treino para avaliar")
    was_training = model.training
    model.eval()
    correct = 0
    for instance in instances:
        nt_input = model.build_input(encoder.encode_question(instance.q), instance.values, encoder)
        scores = model.pretrain_scores(model([nt_input])[0])
        correct += int(torch.argmax(scores).item() == instance.answer_index)
    model.train(was_training)
    return correct / len(instances)


def pretrain_basic(
    reasoner: BasicReasoner,
    questions: Sequence[PreparedQuestion],
    config: Settings,
    epochs: Optional[int] = None,
) -> Tuple[StageHistory, CoverageCounts]:
    """
    Treina Φ com BCE por entidade entre p(e_i | q, G_q) e as respostas.
    Perguntas sem resposta no subgrafo são puladas e contadas.
    """
    if not questions:
        raise ConfigurationError("conjunto de treino do raciocinador básico vazio")
    usable = [question for question in questions if question.covered]
    coverage = CoverageCounts(
        total=len(questions),
        usable=len(usable),
        skipped=[question.record.id for question in questions if not question.covered],
    )
    if coverage.skipped:
        logger.warning(f"⚠️ Cobertura: {coverage.usable}/{coverage.total} perguntas com resposta no subgrafo")
    if not usable:
        raise ConfigurationError("nenhuma pergunta com resposta dentro do subgrafo")

    seed_everything(config.seed)
    params = ParameterSet.from_modules({ParameterGroup.BASIC: reasoner})
    state = build_optimizer(params, config.learning_rate, config.optimizer)
    generator = torch.Generator().manual_seed(config.seed)
    history = StageHistory(name="basic")
    epochs = config.basic_epochs if epochs is None else epochs
    for epoch in range(epochs):
        started = time.perf_counter()
        total = 0.0
        for batch in _batches(usable, config.train_batch_size, generator):
            loss = sum(
                F.binary_cross_entropy(reasoner(q.graph, q.encoding), q.answers, reduction="sum") for q in batch
            ) / len(batch)
            loss.backward()
            optimize_step(params, None, state)
            total += float(loss) * len(batch)
        history.losses.append(total / len(usable))
        history.seconds.append(time.perf_counter() - started)
        logger.info(f"básico época {epoch + 1}/{epochs}: perda {history.losses[-1]:.4f} ({history.seconds[-1]:.1f}s)")
    return history, coverage


def train_classifier(
    classifier: QuestionTypeClassifier,
    encoder: FrozenTextEncoder,
    records: Sequence[QARecord],
    config: Settings,
) -> float:
    """Treina o classificador ordinal/não ordinal (QA real + aumentado) e o deixa pronto para uso."""
    pooled = torch.stack([encoder.encode_question(record.question).pooled for record in records]) if records else torch.zeros(0, encoder.d_enc)
    labels = torch.tensor([float(record.ordinal) for record in records])
    return classifier.fit(
        pooled,
        labels,
        epochs=config.classifier_epochs,
        learning_rate=config.classifier_learning_rate,
        batch_size=config.train_batch_size,
        seed=config.seed,
    )
