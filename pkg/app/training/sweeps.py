"""
Varreduras de hiperparâmetros (μ, θ, tamanho do QIND, quantidade de
números) e ablações de pré-treino e de pipeline.
"""
import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple

from app.core.exceptions import ConfigurationError, UsageError
from .pretrain import evaluate_pretrain, pretrain_nt
from .schemas import AblationRow, CurvePoint, MetricsReport
from .services import Experiment

logger = logging.getLogger(__name__)

SWEEP_AXES = ("mu", "theta", "qind_size", "n_numbers")

DEFAULT_GRIDS: Dict[str, Tuple[float, ...]] = {
    "mu": (0.0, 0.01, 0.05, 0.1, 0.3, 0.5),
    "theta": (0.0, 0.05, 0.1, 0.2, 0.4),
    "qind_size": (2500, 5000, 10000, 22500, 40000),
    "n_numbers": (5, 10, 20, 30, 50),
}


@dataclass(frozen=True)
class Ablation:
    name: str
    # "pretrain" mede acurácia direta do NT; "pipeline" mede Hits@1
    kind: str
    overrides: Mapping[str, object]


ABLATIONS = (
    Ablation("full", "pretrain", {}),
    Ablation("-qind", "pretrain", {"qind": False}),
    Ablation("-qgnd", "pretrain", {"qgnd": False}),
    Ablation("-npl", "pretrain", {"npl": False}),
    Ablation("-ntl", "pretrain", {"ntl": False}),
    Ablation("-sam", "pretrain", {"sam": False}),
    Ablation("-sne", "pretrain", {"sne": False}),
    Ablation("nt-nsm", "pipeline", {}),
    Ablation("w/o pretrain", "pipeline", {"pretrain": False}),
    Ablation("w/o augment", "pipeline", {"augment": False}),
    Ablation("basic-only", "pipeline", {"numerical": False}),
)
ABLATIONS_BY_NAME = {ablation.name: ablation for ablation in ABLATIONS}


def _ordinal_or_all(report: MetricsReport) -> float:
    if report.hits_at_1_ordinal is not None:
        return report.hits_at_1_ordinal
    return report.hits_at_1_all or 0.0


def _qind_splits(experiment: Experiment, qind=None):
    if qind is None:
        qind = experiment.qind_instances() if experiment.paths.qind.exists() else experiment.make_qind()
    train, _, test = experiment.qind_splits(qind)
    return train, test


def pretrain_accuracy(experiment: Experiment, train=None, test=None) -> float:
    """Pré-treina um NT novo com a configuração do experimento e mede no QIND de teste."""
    if train is None or test is None:
        train, test = _qind_splits(experiment)
    model = experiment.build_model()
    qgnd = experiment.make_qgnd()[0] if experiment.config.qgnd else []
    histories = pretrain_nt(model.numerical, experiment.encoder, train, qgnd, experiment.config)
    for history in histories:
        experiment.timings.epochs[history.name] = history.seconds
    return evaluate_pretrain(model.numerical, experiment.encoder, test)


def run_sweep(experiment: Experiment, axis: str, grid: Sequence[float] = ()) -> Tuple[List[CurvePoint], List[float]]:
    """
    Retreina e avalia por ponto da grade, com o resto da configuração e a
    semente fixos. Retorna a curva e os segundos por ponto; no eixo
    n_numbers o tempo por época também vai para os timings do experimento.
    """
    if axis not in SWEEP_AXES:
        raise UsageError("eixo de varredura desconhecido", axis=axis, known=list(SWEEP_AXES))
    grid = tuple(grid) or DEFAULT_GRIDS[axis]
    if not grid:
        raise ConfigurationError("grade de varredura vazia", axis=axis)

    curve: List[CurvePoint] = []
    seconds: List[float] = []
    fixed_split = _qind_splits(experiment) if axis == "qind_size" else None
    for x in grid:
        started = time.perf_counter()
        if axis == "mu":
            metric = _ordinal_or_all(experiment.with_config(mu=float(x)).run_pipeline())
        elif axis == "theta":
            point = experiment.with_config(augment_proportion=float(x), augment=float(x) > 0)
            point.augmented = point.make_augmented(float(x))
            metric = _ordinal_or_all(point.run_pipeline())
        elif axis == "qind_size":
            # Teste fixo; só o treino do QIND encolhe
            train, test = fixed_split
            metric = pretrain_accuracy(experiment.with_config(qgnd=False), train[: int(x)], test)
        else:
            point = experiment.with_config(n_range=(int(x), int(x)), n_max_numbers=max(int(x), experiment.config.n_max_numbers), qgnd=False)
            metric = pretrain_accuracy(point, *_qind_splits(point, point.make_qind(n_range=(int(x), int(x)))))
            experiment.timings.epochs[f"n_numbers={int(x)}"] = point.timings.epochs.get("qind", [])
        seconds.append(time.perf_counter() - started)
        curve.append(CurvePoint(x=float(x), metric=metric))
        logger.info(f"📈 {axis}={x}: {metric:.3f} ({seconds[-1]:.1f}s)")
    experiment.timings.sweeps[axis] = seconds
    return curve, seconds


def run_ablation(experiment: Experiment, names: Sequence[str] = ()) -> List[AblationRow]:
    """Uma linha por variante; variantes de pré-treino medem acurácia direta, as de pipeline Hits@1."""
    names = tuple(names) or tuple(ABLATIONS_BY_NAME)
    unknown = [name for name in names if name not in ABLATIONS_BY_NAME]
    if unknown:
        raise UsageError("ablação desconhecida", unknown=unknown, known=list(ABLATIONS_BY_NAME))
    rows = []
    for name in names:
        ablation = ABLATIONS_BY_NAME[name]
        variant = experiment.with_config(**ablation.overrides)
        started = time.perf_counter()
        if ablation.kind == "pretrain":
            row = AblationRow(name=name, pretrain_accuracy=pretrain_accuracy(variant))
        else:
            report = variant.run_pipeline()
            row = AblationRow(
                name=name,
                pretrain_accuracy=report.pretrain_accuracy,
                hits_at_1_all=report.hits_at_1_all,
                hits_at_1_ordinal=report.hits_at_1_ordinal,
            )
        experiment.timings.stages[f"ablation {name}"] = time.perf_counter() - started
        logger.info(f"🧪 Ablação {name}: {row.model_dump(exclude_none=True)}")
        rows.append(row)
    return rows


def write_curves_csv(path: Path, curves: Mapping[str, Sequence[CurvePoint]], seconds: Mapping[str, Sequence[float]]) -> None:
    """CSV plano: axis, x, metric, seconds."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["axis", "x", "metric", "seconds"])
        for axis in sorted(curves):
            times = list(seconds.get(axis, []))
            for position, point in enumerate(curves[axis]):
                elapsed = times[position] if position < len(times) else ""
                writer.writerow([axis, point.x, f"{point.metric:.6f}", elapsed])
