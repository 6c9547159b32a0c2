import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from pydantic import field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Configuração de treino e caminhos do projeto.

    Defaults: lr 1e-4, margem 0.5, mu 0.05, K=3, 2 camadas / 8 cabeças,
    N em [2, 50].
    """

    model_config = SettingsConfigDict(
        env_prefix="NTKBQA_",
        env_file=".env",
        extra="ignore",
    )

    # Otimização
    learning_rate: float = 0.0001
    optimizer: str = "adam"
    seed: int = 0

    # Pré-treino (NTL / NPL)
    margin: float = 0.5
    ntl_weight: float = 1.0
    triplets_per_instance: int = 5
    n_range: Tuple[int, int] = (2, 50)
    pretrain_batch_size: int = 300
    pretrain_epochs: int = 15

    # Raciocínio
    mu: float = 0.05
    top_k: int = 3
    nt_layers: int = 2
    nt_heads: int = 8
    n_max_numbers: int = 50
    reasoning_steps: int = 3
    d_enc: int = 64
    d_h: int = 64

    # Treino completo
    train_batch_size: int = 40
    train_epochs: int = 50
    basic_epochs: int = 50
    classifier_epochs: int = 30
    classifier_learning_rate: float = 0.01
    patience: int = 5

    # Recuperação de subgrafo
    ppr_damping: float = 0.85
    ppr_top_n: int = 500

    # Geração de dados
    distractors_per_instance: int = 9
    augment_proportion: float = 0.1
    qind_size: int = 40000
    qa_size: int = 2000
    ordinal_fraction: float = 0.3
    kb_entities: int = 400
    kb_filler_relations: int = 2
    numeric_fraction: float = 0.9

    # Ablações
    sam: bool = True
    sne: bool = True
    qind: bool = True
    qgnd: bool = True
    npl: bool = True
    ntl: bool = True
    pretrain: bool = True
    augment: bool = True
    numerical: bool = True

    # Caminhos
    data_dir: Path = Path("data")
    checkpoint_dir: Path = Path("checkpoints")
    output_dir: Path = Path("runs")
    database_url: str = "sqlite:///runs/registry.db"
    log_level: str = "INFO"

    @field_validator("d_enc")
    @classmethod
    def _even_width(cls, value: int) -> int:
        if value <= 0 or value % 2:
            raise ValueError("d_enc deve ser positivo e par")
        return value

    @field_validator("mu")
    @classmethod
    def _threshold_range(cls, value: float) -> float:
        if not 0.0 <= value < 1.0:
            raise ValueError("mu deve estar em [0, 1)")
        return value

    @field_validator("optimizer")
    @classmethod
    def _known_optimizer(cls, value: str) -> str:
        if value not in ("adam", "sgd"):
            raise ValueError("optimizer deve ser 'adam' ou 'sgd'")
        return value

    @model_validator(mode="after")
    def _consistent_shapes(self) -> "Settings":
        if self.d_h % 2 or self.d_h % self.nt_heads:
            raise ValueError("d_h deve ser par e divisível por nt_heads")
        low, high = self.n_range
        if low < 2 or high < low:
            raise ValueError("n_range deve satisfazer 2 <= min <= max")
        return self

    def config_hash(self) -> str:
        """SHA-256 do dump canônico, sem os caminhos locais."""
        payload = self.model_dump(
            mode="json",
            exclude={"data_dir", "checkpoint_dir", "output_dir", "database_url", "log_level"},
        )
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_settings(config_path: Optional[Path] = None, **overrides: Any) -> Settings:
    """Carrega Settings a partir de um arquivo TOML opcional mais overrides da CLI.

    Os overrides com valor None são ignorados, para que flags não informadas
    não apaguem valores do arquivo ou do ambiente.
    """
    values: Dict[str, Any] = {}
    if config_path is not None:
        with open(config_path, "rb") as handle:
            values.update(tomllib.load(handle))
    values.update({key: value for key, value in overrides.items() if value is not None})
    return Settings(**values)


settings = Settings()
