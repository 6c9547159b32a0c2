"""
Linha de comando: geração de KB e dados, estágios do pipeline de treino,
avaliação, varreduras e ablações.

Todo campo de Settings vira uma flag de mesmo nome (`--learning-rate`,
`--no-sam`, `--n-range 2 50`...), aplicada por cima do arquivo TOML de
`--config`, do ambiente (NTKBQA_*) e do .env.
"""
import json
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, Optional, Sequence

import click
from pydantic import ValidationError

from app.core.config import Settings, load_settings, settings as default_settings
from app.core.database import get_db
from app.core.exceptions import DataValidationError, KBQAError
from app.core.nn import ParameterGroup
from app.datagen.services import pretrain_label_mismatches, qa_label_mismatches
from app.kb.services import RELATIONS_FILE, TRIPLES_FILE, load_kb
from app.training.pretrain import evaluate_pretrain
from app.training.schemas import MetricsReport, RunOut, TimingsReport
from app.training.services import Experiment, create_run, finish_run, get_runs, record_checkpoints
from app.training.sweeps import ABLATIONS_BY_NAME, SWEEP_AXES, run_ablation, run_sweep, write_curves_csv

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class KBQAGroup(click.Group):
    """Converte erros do domínio e de validação em ClickException (saída != 0)."""

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except KBQAError as exc:
            raise click.ClickException(str(exc)) from exc
        except ValidationError as exc:
            raise click.ClickException(f"configuração inválida: {exc}") from exc


def _option_for(name: str, field) -> Callable:
    flag = "--" + name.replace("_", "-")
    annotation = field.annotation
    help_text = f"default: {field.default}"
    if annotation is bool:
        return click.option(f"{flag}/--no-{name.replace('_', '-')}", name, default=None, help=help_text)
    if name == "n_range":
        return click.option(flag, name, type=int, nargs=2, default=None, help=help_text)
    if annotation is Path:
        return click.option(flag, name, type=click.Path(path_type=Path), default=None, help=help_text)
    return click.option(flag, name, type=annotation, default=None, help=help_text)


def settings_options(exclude: Sequence[str] = ()) -> Callable:
    """Decorador que adiciona uma flag por campo de Settings."""

    def decorate(command: Callable) -> Callable:
        for name, field in reversed(list(Settings.model_fields.items())):
            if name in exclude:
                continue
            command = _option_for(name, field)(command)
        return command

    return decorate


def make_settings(ctx: click.Context, overrides: Dict[str, Any]) -> Settings:
    return load_settings(ctx.obj.get("config_path"), **overrides)


def write_report(directory: Path, metrics: Optional[MetricsReport], timings: TimingsReport) -> None:
    """metrics.json sem tempos (determinístico) e timings.json ao lado."""
    directory.mkdir(parents=True, exist_ok=True)
    if metrics is not None:
        (directory / "metrics.json").write_text(
            json.dumps(metrics.model_dump(mode="json"), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    (directory / "timings.json").write_text(timings.model_dump_json(indent=2) + "\n", encoding="utf-8")
    click.echo(f"📄 Relatórios em {directory}")


@contextmanager
def registered(command: str, config: Settings) -> Iterator[Dict[str, Any]]:
    """
    Registra a execução no banco; o corpo preenche `outcome["metrics"]`,
    `outcome["timings"]` e `outcome["manifest"]`.
    """
    outcome: Dict[str, Any] = {}
    with get_db(config.database_url) as db:
        run = create_run(db, command, config)
        try:
            yield outcome
        except Exception as exc:
            finish_run(db, run, error=str(exc))
            raise
        if outcome.get("manifest") is not None:
            record_checkpoints(db, run, outcome["manifest"], config.checkpoint_dir)
        finish_run(db, run, metrics=outcome.get("metrics"), timings=outcome.get("timings"))


def required_groups(config: Settings):
    groups = [ParameterGroup.BASIC]
    if config.numerical:
        groups.append(ParameterGroup.CLASSIFIER)
        if config.pretrain:
            groups.append(ParameterGroup.NUMERICAL)
    return groups


@click.group(cls=KBQAGroup)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None, help="Arquivo TOML de configuração")
@click.option("--log-level", default=None, help="Nível de log (padrão: settings.log_level)")
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[Path], log_level: Optional[str]):
    """KBQA com raciocínio ordinal sobre embeddings."""
    logging.basicConfig(level=(log_level or default_settings.log_level).upper(), format=LOG_FORMAT)
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path


# ---- kb -----------------------------------------------------------------

@cli.group(cls=KBQAGroup)
def kb():
    """Base de conhecimento."""


@kb.command("gen")
@settings_options()
@click.pass_context
def kb_gen(ctx: click.Context, **overrides):
    """Gera a KB sintética em <data_dir>/kb."""
    experiment = Experiment(make_settings(ctx, overrides))
    generated = experiment.generate_kb()
    click.echo(f"✅ KB: {len(generated.entities)} entidades, {len(generated.triples)} triplas em {experiment.paths.kb_dir}")


@kb.command("load-check")
@click.option("--triples", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--relations", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@settings_options()
@click.pass_context
def kb_load_check(ctx: click.Context, triples: Optional[Path], relations: Optional[Path], **overrides):
    """Carrega e normaliza a KB, reportando a primeira linha inválida."""
    config = make_settings(ctx, overrides)
    kb_dir = Path(config.data_dir) / "kb"
    loaded = load_kb(triples or kb_dir / TRIPLES_FILE, relations or kb_dir / RELATIONS_FILE)
    numerical = loaded.numerical_relations()
    click.echo(
        f"✅ {len(loaded.entities)} entidades, {len(loaded.triples)} triplas, "
        f"{len(loaded.relations)} relações ({len(numerical)} numéricas)"
    )


# ---- data ---------------------------------------------------------------

@cli.group(cls=KBQAGroup)
def data():
    """Conjuntos de dados."""


@data.command("qa")
@settings_options()
@click.pass_context
def data_qa(ctx: click.Context, **overrides):
    """Corpus de QA com perguntas factuais e ordinais."""
    experiment = Experiment(make_settings(ctx, overrides))
    records = experiment.generate_qa()
    mismatches = qa_label_mismatches(experiment.kb, records)
    if mismatches:
        raise DataValidationError("rótulos de QA divergem do oráculo", ids=mismatches[:10], count=len(mismatches))
    click.echo(f"✅ {len(records)} perguntas em {experiment.paths.qa}")


@data.command("qind")
@settings_options()
@click.pass_context
def data_qind(ctx: click.Context, **overrides):
    """QIND: instâncias numéricas independentes de pergunta."""
    experiment = Experiment(make_settings(ctx, overrides))
    instances = experiment.generate_qind()
    mismatches = pretrain_label_mismatches(instances)
    if mismatches:
        raise DataValidationError("rótulos do QIND divergem do oráculo", positions=mismatches[:10], count=len(mismatches))
    click.echo(f"✅ {len(instances)} instâncias em {experiment.paths.qind}")


@data.command("qgnd")
@settings_options()
@click.pass_context
def data_qgnd(ctx: click.Context, **overrides):
    """QGND: instâncias guiadas pelas perguntas ordinais de treino."""
    experiment = Experiment(make_settings(ctx, overrides))
    instances, report = experiment.generate_qgnd()
    click.echo(
        f"✅ {report.emitted} instâncias em {experiment.paths.qgnd} "
        f"({len(report.skipped)} puladas, {len(report.rejected)} rejeitadas, {len(report.inconsistent)} não extremas)"
    )


@data.command("augment")
@settings_options()
@click.pass_context
def data_augment(ctx: click.Context, **overrides):
    """Pares de QA ordinais pelo template (θ do treino real)."""
    experiment = Experiment(make_settings(ctx, overrides))
    records = experiment.generate_augmented()
    mismatches = qa_label_mismatches(experiment.kb, records)
    if mismatches:
        raise DataValidationError("rótulos aumentados divergem do oráculo", ids=mismatches[:10], count=len(mismatches))
    click.echo(f"✅ {len(records)} pares em {experiment.paths.augmented}")


# ---- pretrain -----------------------------------------------------------

@cli.group(cls=KBQAGroup)
def pretrain():
    """Estágios de pré-treino."""


@pretrain.command("basic")
@settings_options()
@click.pass_context
def pretrain_basic_command(ctx: click.Context, **overrides):
    """Pré-treina Φ no QA real."""
    config = make_settings(ctx, overrides)
    experiment = Experiment(config)
    with registered("pretrain basic", config) as outcome:
        model = experiment.build_model()
        coverage = experiment.stage_pretrain_basic(model)
        outcome["manifest"] = experiment.save(model, [ParameterGroup.BASIC])
        outcome["metrics"] = MetricsReport(config_hash=config.config_hash(), seed=config.seed, coverage=coverage)
        outcome["timings"] = experiment.timings
    click.echo(f"✅ Φ pré-treinado ({coverage.usable}/{coverage.total} perguntas usadas)")


@pretrain.command("nt")
@settings_options()
@click.pass_context
def pretrain_nt_command(ctx: click.Context, **overrides):
    """Pré-treina Θ em QIND e depois QGND (NPL + λ·NTL)."""
    config = make_settings(ctx, overrides)
    experiment = Experiment(config)
    with registered("pretrain nt", config) as outcome:
        model = experiment.build_model()
        accuracy = experiment.stage_pretrain_nt(model)
        outcome["manifest"] = experiment.save(model, [ParameterGroup.NUMERICAL])
        outcome["metrics"] = MetricsReport(config_hash=config.config_hash(), seed=config.seed, pretrain_accuracy=accuracy)
        outcome["timings"] = experiment.timings
    if accuracy is None:
        click.echo("✅ Θ aleatório salvo (pré-treino desligado)")
    else:
        click.echo(f"✅ Θ pré-treinado: acurácia no QIND de teste {accuracy:.3f}")


@pretrain.command("classifier")
@settings_options()
@click.pass_context
def pretrain_classifier_command(ctx: click.Context, **overrides):
    """Treina o classificador ordinal/não ordinal no QA real + aumentado."""
    config = make_settings(ctx, overrides)
    experiment = Experiment(config)
    with registered("pretrain classifier", config) as outcome:
        model = experiment.build_model()
        accuracy = experiment.stage_classifier(model)
        outcome["manifest"] = experiment.save(model, [ParameterGroup.CLASSIFIER])
        outcome["timings"] = experiment.timings
    click.echo(f"✅ Classificador treinado: acurácia {accuracy:.3f}")


# ---- train / eval -------------------------------------------------------

@cli.command("train")
@click.option("--seed", type=int, required=True, help="Semente (obrigatória)")
@settings_options(exclude=("seed",))
@click.pass_context
def train_command(ctx: click.Context, seed: int, **overrides):
    """Treino completo (Φ e Ψ) com Θ e classificador congelados; avalia no teste."""
    config = make_settings(ctx, {**overrides, "seed": seed})
    experiment = Experiment(config)
    with registered("train", config) as outcome:
        model = experiment.build_model()
        experiment.load(model, required_groups(config))
        report = experiment.stage_train(model)
        groups = [ParameterGroup.BASIC, ParameterGroup.COMPREHENSIVE]
        if config.numerical:
            groups += [ParameterGroup.NUMERICAL, ParameterGroup.CLASSIFIER]
        outcome["manifest"] = experiment.save(model, groups)
        outcome["metrics"] = report
        outcome["timings"] = experiment.timings
    write_report(Path(config.output_dir) / "train", report, experiment.timings)
    click.echo(f"✅ Hits@1: todas {report.hits_at_1_all:.3f}, ordinais {report.hits_at_1_ordinal}")


@cli.command("eval")
@click.option("--split", type=click.Choice(["validation", "test"]), default="test")
@settings_options()
@click.pass_context
def eval_command(ctx: click.Context, split: str, **overrides):
    """Hits@1 do modelo dos checkpoints."""
    config = make_settings(ctx, overrides)
    experiment = Experiment(config)
    with registered("eval", config) as outcome:
        model = experiment.build_model()
        groups = [ParameterGroup.BASIC]
        if config.numerical:
            groups += [ParameterGroup.NUMERICAL, ParameterGroup.COMPREHENSIVE, ParameterGroup.CLASSIFIER]
        experiment.load(model, groups)
        _, validation, test = experiment.qa_splits()
        report = experiment.stage_evaluate(model, validation if split == "validation" else test)
        outcome["metrics"] = report
        outcome["timings"] = experiment.timings
    write_report(Path(config.output_dir) / "eval", report, experiment.timings)
    click.echo(f"✅ Hits@1 ({split}): todas {report.hits_at_1_all:.3f}, ordinais {report.hits_at_1_ordinal}")


@cli.command("eval-pretrain")
@settings_options()
@click.pass_context
def eval_pretrain_command(ctx: click.Context, **overrides):
    """Acurácia direta do NT (argmax p(v_j)) no QIND de teste."""
    config = make_settings(ctx, overrides)
    experiment = Experiment(config)
    with registered("eval-pretrain", config) as outcome:
        model = experiment.build_model()
        experiment.load(model, [ParameterGroup.NUMERICAL])
        _, _, test = experiment.qind_splits()
        with experiment.timed("eval-pretrain"):
            accuracy = evaluate_pretrain(model.numerical, experiment.encoder, test)
        report = MetricsReport(config_hash=config.config_hash(), seed=config.seed, pretrain_accuracy=accuracy)
        outcome["metrics"] = report
        outcome["timings"] = experiment.timings
    write_report(Path(config.output_dir) / "eval-pretrain", report, experiment.timings)
    click.echo(f"✅ Acurácia de pré-treino: {accuracy:.3f}")


# ---- sweep / ablate -----------------------------------------------------

def _parse_grid(raw: Optional[str]):
    if not raw:
        return ()
    try:
        return tuple(float(item) for item in raw.split(",") if item.strip())
    except ValueError as exc:
        raise click.BadParameter(f"grade inválida: {raw}") from exc


@cli.command("sweep")
@click.option("--axis", type=click.Choice(SWEEP_AXES), required=True)
@click.option("--grid", default=None, help="Valores separados por vírgula (padrão: grade do eixo)")
@settings_options()
@click.pass_context
def sweep_command(ctx: click.Context, axis: str, grid: Optional[str], **overrides):
    """Curva de um hiperparâmetro: JSON de métricas + CSV plano."""
    config = make_settings(ctx, overrides)
    experiment = Experiment(config)
    with registered(f"sweep {axis}", config) as outcome:
        curve, seconds = run_sweep(experiment, axis, _parse_grid(grid))
        report = MetricsReport(config_hash=config.config_hash(), seed=config.seed, curves={axis: curve})
        outcome["metrics"] = report
        outcome["timings"] = experiment.timings
    directory = Path(config.output_dir) / f"sweep-{axis}"
    write_report(directory, report, experiment.timings)
    write_curves_csv(directory / "curves.csv", report.curves, {axis: seconds})


@cli.command("ablate")
@click.option("--name", "names", multiple=True, type=click.Choice(sorted(ABLATIONS_BY_NAME)), help="Variante (repetível; padrão: todas)")
@settings_options()
@click.pass_context
def ablate_command(ctx: click.Context, names, **overrides):
    """Ablações de pré-treino (acurácia direta) e de pipeline (Hits@1)."""
    config = make_settings(ctx, overrides)
    experiment = Experiment(config)
    with registered("ablate", config) as outcome:
        rows = run_ablation(experiment, names)
        report = MetricsReport(config_hash=config.config_hash(), seed=config.seed, ablations=rows)
        outcome["metrics"] = report
        outcome["timings"] = experiment.timings
    write_report(Path(config.output_dir) / "ablate", report, experiment.timings)
    for row in rows:
        click.echo(f"{row.name:>14}  pretrain={row.pretrain_accuracy}  all={row.hits_at_1_all}  ordinal={row.hits_at_1_ordinal}")


@cli.command("runs")
@click.option("--command", "command_name", default=None)
@click.option("--limit", type=int, default=20)
@settings_options()
@click.pass_context
def runs_command(ctx: click.Context, command_name: Optional[str], limit: int, **overrides):
    """Lista as últimas execuções do registro."""
    config = make_settings(ctx, overrides)
    with get_db(config.database_url) as db:
        for run in get_runs(db, command_name, limit):
            row = RunOut.model_validate(run)
            status = row.status.value if row.status else "-"
            click.echo(f"{row.id:>4}  {row.command:<20} {status:<10} seed={row.seed} {row.config_hash[:12]}")


def main() -> None:
    cli(obj={})


if __name__ == "__main__":
    main()
