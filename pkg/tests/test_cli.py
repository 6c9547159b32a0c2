"""
Testes da linha de comando, da configuração e das varreduras.
"""
import csv
import json

import pytest
from click.testing import CliRunner

from app.cli import cli
from app.core.config import Settings, load_settings
from app.core.exceptions import UsageError
from app.training.schemas import CurvePoint
from app.training.services import Experiment
from app.training.sweeps import run_ablation, run_sweep, write_curves_csv


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def paths(tmp_path):
    """Flags comuns: caminhos temporários e modelo pequeno."""
    return [
        "--data-dir", str(tmp_path / "data"),
        "--checkpoint-dir", str(tmp_path / "checkpoints"),
        "--output-dir", str(tmp_path / "runs"),
        "--database-url", f"sqlite:///{tmp_path / 'registry.db'}",
        "--kb-entities", "40",
        "--qa-size", "30",
        "--d-enc", "16",
        "--d-h", "16",
        "--nt-heads", "2",
    ]


def invoke(runner, args):
    return runner.invoke(cli, args, obj={})


class TestSettings:
    """Testes do carregamento da configuração."""

    def test_toml_file_and_overrides(self, tmp_path):
        """Teste arquivo TOML com override explícito e override None ignorado."""
        path = tmp_path / "config.toml"
        path.write_text("seed = 3\nmu = 0.1\nn_range = [2, 10]\n", encoding="utf-8")
        config = load_settings(path, mu=0.2, seed=None)
        assert config.seed == 3
        assert config.mu == 0.2
        assert config.n_range == (2, 10)

    def test_hash_ignores_paths(self, tmp_path):
        """Teste hash igual para caminhos diferentes e distinto para hiperparâmetros."""
        base = Settings()
        assert Settings(data_dir=tmp_path).config_hash() == base.config_hash()
        assert Settings(mu=0.1).config_hash() != base.config_hash()

    def test_invalid_values(self):
        """Teste validações de mu, n_range e cabeças."""
        with pytest.raises(ValueError):
            Settings(mu=1.0)
        with pytest.raises(ValueError):
            Settings(n_range=(1, 5))
        with pytest.raises(ValueError):
            Settings(d_h=64, nt_heads=6)


class TestKBCommands:
    """Testes dos comandos kb."""

    def test_gen_then_load_check(self, runner, paths, tmp_path):
        """Teste kb gen seguido de load-check sobre os arquivos gerados."""
        result = invoke(runner, ["kb", "gen", *paths])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "data" / "kb" / "triples.tsv").exists()
        check = invoke(runner, ["kb", "load-check", *paths])
        assert check.exit_code == 0, check.output
        assert "numéricas" in check.output

    def test_load_check_reports_line(self, runner, paths, tmp_path):
        """Teste linha inválida reportada com saída diferente de zero."""
        triples = tmp_path / "triples.tsv"
        relations = tmp_path / "relations.jsonl"
        triples.write_text("a\tlink\tb\nx\tarea\tabc\n", encoding="utf-8")
        relations.write_text(
            '{"name": "link", "numerical": false}\n{"name": "area", "numerical": true, "kind": "size"}\n',
            encoding="utf-8",
        )
        result = invoke(runner, ["kb", "load-check", "--triples", str(triples), "--relations", str(relations), *paths])
        assert result.exit_code == 1
        assert "line_number=2" in result.output

    def test_invalid_setting(self, runner, paths):
        """Teste valor fora da faixa vira erro de configuração."""
        result = invoke(runner, ["kb", "gen", *paths, "--mu", "1.5"])
        assert result.exit_code == 1
        assert "configuração inválida" in result.output


class TestDataCommands:
    """Testes dos comandos data."""

    def test_qa_qind_and_augment(self, runner, paths, tmp_path):
        """Teste geração dos conjuntos com rótulos verificados pelo oráculo."""
        assert invoke(runner, ["kb", "gen", *paths]).exit_code == 0
        for command in (["data", "qa"], ["data", "qind", "--qind-size", "20"], ["data", "qgnd"], ["data", "augment", "--augment-proportion", "0.5"]):
            result = invoke(runner, [*command, *paths])
            assert result.exit_code == 0, result.output
        data = tmp_path / "data"
        assert len((data / "qa.jsonl").read_text(encoding="utf-8").splitlines()) == 30
        assert len((data / "qind.jsonl").read_text(encoding="utf-8").splitlines()) == 20
        # 30 perguntas -> 18 de treino -> round(0.5 * 18) = 9 pares
        assert len((data / "augmented.jsonl").read_text(encoding="utf-8").splitlines()) == 9

    def test_qa_without_kb(self, runner, paths):
        """Teste dados sem a KB: erro apontando o estágio kb gen."""
        result = invoke(runner, ["data", "qa", *paths])
        assert result.exit_code == 1
        assert "kb gen" in result.output


class TestTrainingCommands:
    """Testes dos comandos de treino com estágios pesados simulados."""

    def test_train_requires_seed(self, runner, paths):
        """Teste train sem --seed."""
        result = invoke(runner, ["train", *paths])
        assert result.exit_code == 2

    def test_train_without_checkpoints(self, runner, paths):
        """Teste train antes do pré-treino: estágio faltante e execução falha no registro."""
        assert invoke(runner, ["kb", "gen", *paths]).exit_code == 0
        assert invoke(runner, ["data", "qa", *paths]).exit_code == 0
        result = invoke(runner, ["train", "--seed", "0", *paths])
        assert result.exit_code == 1
        assert "pretrain basic" in result.output
        runs = invoke(runner, ["runs", *paths])
        assert "train" in runs.output and "failed" in runs.output

    def test_pretrain_nt_saves_theta(self, runner, paths, tmp_path, mocker):
        """Teste pretrain nt com o estágio simulado: checkpoint e manifest gravados."""
        assert invoke(runner, ["kb", "gen", *paths]).exit_code == 0
        stage = mocker.patch.object(Experiment, "stage_pretrain_nt", return_value=0.5)
        result = invoke(runner, ["pretrain", "nt", *paths])
        assert result.exit_code == 0, result.output
        assert "0.500" in result.output
        stage.assert_called_once()
        manifest = json.loads((tmp_path / "checkpoints" / "manifest.json").read_text(encoding="utf-8"))
        assert set(manifest["groups"]) == {"theta"}
        assert "completed" in invoke(runner, ["runs", "--command", "pretrain nt", *paths]).output

    def test_sweep_writes_reports(self, runner, paths, tmp_path, mocker):
        """Teste sweep com a curva simulada: metrics.json ordenado e curves.csv."""
        mocker.patch("app.cli.run_sweep", return_value=([CurvePoint(x=0.1, metric=0.5)], [2.0]))
        result = invoke(runner, ["sweep", "--axis", "mu", "--grid", "0.1", *paths])
        assert result.exit_code == 0, result.output
        directory = tmp_path / "runs" / "sweep-mu"
        text = (directory / "metrics.json").read_text(encoding="utf-8")
        assert list(json.loads(text)) == sorted(json.loads(text))
        assert json.loads(text)["curves"]["mu"] == [{"x": 0.1, "metric": 0.5}]
        assert (directory / "timings.json").exists()
        with open(directory / "curves.csv", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["axis", "x", "metric", "seconds"]
        assert rows[1][:3] == ["mu", "0.1", "0.500000"]

    def test_invalid_grid(self, runner, paths):
        """Teste grade que não é numérica."""
        result = invoke(runner, ["sweep", "--axis", "mu", "--grid", "a,b", *paths])
        assert result.exit_code == 2


class TestSweeps:
    """Testes das funções de varredura e ablação."""

    def test_unknown_axis(self, small_settings):
        """Teste eixo desconhecido."""
        with pytest.raises(UsageError):
            run_sweep(Experiment(small_settings), "depth")

    def test_unknown_ablation(self, small_settings):
        """Teste ablação desconhecida."""
        with pytest.raises(UsageError):
            run_ablation(Experiment(small_settings), ["-everything"])

    def test_curves_csv(self, tmp_path):
        """Teste CSV com eixos em ordem e segundos por ponto."""
        curves = {"theta": [CurvePoint(x=0.0, metric=0.2)], "mu": [CurvePoint(x=0.05, metric=0.4), CurvePoint(x=0.1, metric=0.3)]}
        write_curves_csv(tmp_path / "curves.csv", curves, {"mu": [1.0, 2.0]})
        with open(tmp_path / "curves.csv", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        assert [row[0] for row in rows[1:]] == ["mu", "mu", "theta"]
        assert rows[1][3] == "1.0" and rows[3][3] == ""

    @pytest.mark.slow
    def test_theta_sweep_end_to_end(self, small_settings):
        """Teste varredura de θ com dois pontos sobre dados gerados."""
        experiment = Experiment(small_settings)
        experiment.generate_kb()
        experiment.generate_qa()
        curve, seconds = run_sweep(experiment, "theta", (0.0, 0.2))
        assert [point.x for point in curve] == [0.0, 0.2]
        assert all(0.0 <= point.metric <= 1.0 for point in curve)
        assert len(seconds) == 2

    @pytest.mark.slow
    def test_sweep_outputs_per_axis(self, small_settings):
        """Teste formas das varreduras de μ, QIND e quantidade de números."""
        experiment = Experiment(small_settings)
        experiment.generate_kb()
        experiment.generate_qa()
        grids = {"mu": (0.0, 0.05, 0.1), "qind_size": (10, 20), "n_numbers": (2, 3)}
        for axis, grid in grids.items():
            curve, seconds = run_sweep(experiment, axis, grid)
            assert [point.x for point in curve] == [float(x) for x in grid]
            assert all(0.0 <= point.metric <= 1.0 for point in curve)
            assert len(seconds) == len(grid) and experiment.timings.sweeps[axis] == seconds
        assert set(experiment.timings.epochs) >= {"n_numbers=2", "n_numbers=3"}
