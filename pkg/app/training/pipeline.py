"""
Treino completo e avaliação Hits@1.
"""
import copy
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import torch
import torch.nn.functional as F

from app.core.config import Settings
from app.core.exceptions import ContractViolation, EvaluationError, PipelineError
from app.core.nn import ParameterGroup, build_optimizer, optimize_step, seed_everything
from app.reasoning.context import PreparedQuestion
from app.reasoning.model import NTNSM
from .pretrain import StageHistory, _batches
from .schemas import MetricsReport

logger = logging.getLogger(__name__)

PROBABILITY_FLOOR = 1e-7


@dataclass
class TrainResult:
    history: StageHistory
    best_epoch: int = 0
    best_validation: float = 0.0
    validation: List[float] = field(default_factory=list)


def question_loss(model: NTNSM, question: PreparedQuestion) -> torch.Tensor:
    """BCE entre a mistura final e os indicadores de resposta."""
    prediction = model(question)
    probabilities = prediction.p_final.clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
    return F.binary_cross_entropy(probabilities, question.answers, reduction="sum")


def train_full(
    model: NTNSM,
    train: Sequence[PreparedQuestion],
    validation: Sequence[PreparedQuestion],
    config: Settings,
    epochs: Optional[int] = None,
) -> TrainResult:
    """
    Otimiza Φ e Ψ através da mistura final em dados reais + aumentados;
    Θ e o classificador permanecem congelados. Parada antecipada pelo
    Hits@1 de validação com paciência `config.patience`.
    """
    if model.use_numerical and not bool(model.classifier.trained):
        raise PipelineError("classificador de tipo de pergunta não treinado", stage="pretrain classifier")
    usable = [question for question in train if question.covered]
    if not usable:
        raise PipelineError("nenhuma pergunta de treino com resposta no subgrafo", stage="train")

    params = model.parameter_set()
    params.freeze(ParameterGroup.NUMERICAL)
    params.freeze(ParameterGroup.CLASSIFIER)
    if not model.use_numerical:
        params.freeze(ParameterGroup.COMPREHENSIVE)
    theta_before = params.fingerprint(ParameterGroup.NUMERICAL)

    seed_everything(config.seed)
    state = build_optimizer(params, config.learning_rate, config.optimizer)
    generator = torch.Generator().manual_seed(config.seed)
    model.numerical.eval()
    history = StageHistory(name="train")
    result = TrainResult(history=history, best_validation=-1.0)
    best_state: Dict[str, dict] = {}
    stale = 0
    epochs = config.train_epochs if epochs is None else epochs
    for epoch in range(epochs):
        started = time.perf_counter()
        total = 0.0
        for batch in _batches(usable, config.train_batch_size, generator):
            loss = sum(question_loss(model, question) for question in batch) / len(batch)
            loss.backward()
            optimize_step(params, None, state)
            total += float(loss) * len(batch)
        history.losses.append(total / len(usable))
        history.seconds.append(time.perf_counter() - started)

        score = hits_at_1(model, validation) if validation else -history.losses[-1]
        result.validation.append(score)
        logger.info(f"treino época {epoch + 1}/{epochs}: perda {history.losses[-1]:.4f}, val {score:.3f} ({history.seconds[-1]:.1f}s)")
        if score > result.best_validation:
            result.best_validation = score
            result.best_epoch = epoch + 1
            best_state = {"basic": copy.deepcopy(model.basic.state_dict()), "comprehensive": copy.deepcopy(model.comprehensive.state_dict())}
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.info(f"Parada antecipada na época {epoch + 1} (melhor: {result.best_epoch})")
                break

    if best_state:
        model.basic.load_state_dict(best_state["basic"])
        model.comprehensive.load_state_dict(best_state["comprehensive"])
    if params.fingerprint(ParameterGroup.NUMERICAL) != theta_before:
        raise ContractViolation("parâmetros Θ mudaram durante o treino completo")
    return result


@torch.no_grad()
def hits_at_1(model: NTNSM, questions: Sequence[PreparedQuestion]) -> float:
    if not questions:
        raise EvaluationError("conjunto de avaliação vazio")
    hits = sum(int(model(question).top_entity() in question.record.answers) for question in questions)
    return hits / len(questions)


@torch.no_grad()
def evaluate(model: NTNSM, questions: Sequence[PreparedQuestion], config: Optional[Settings] = None) -> MetricsReport:
    """Hits@1 geral, ordinal e não ordinal; empates vão para o menor id de entidade."""
    if not questions:
        raise EvaluationError("conjunto de teste vazio")
    hits = {True: 0, False: 0}
    counts = {True: 0, False: 0}
    fallback = truncated = 0
    for question in questions:
        prediction = model(question)
        counts[question.ordinal] += 1
        hits[question.ordinal] += int(prediction.top_entity() in question.record.answers)
        fallback += int(prediction.fallback)
        truncated += len(prediction.truncations)

    def rate(flag: bool) -> Optional[float]:
        return hits[flag] / counts[flag] if counts[flag] else None

    report = MetricsReport(
        questions=len(questions),
        ordinal_questions=counts[True],
        hits_at_1_all=(hits[True] + hits[False]) / len(questions),
        hits_at_1_ordinal=rate(True),
        hits_at_1_non_ordinal=rate(False),
        fallback_questions=fallback,
        truncated_inputs=truncated,
    )
    if config is not None:
        report.config_hash = config.config_hash()
        report.seed = config.seed
    return report
