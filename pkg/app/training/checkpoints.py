"""
Checkpoints por grupo de parâmetros (phi.pt, theta.pt, psi.pt,
classifier.pt) com um manifest.json que registra hash da configuração,
semente e o SHA-256 de cada arquivo.
"""
import hashlib
import logging
from pathlib import Path
from typing import Dict, Iterable, Optional

import torch
from torch import nn

from app.core.config import Settings
from app.core.exceptions import LoadError, PipelineError
from app.core.nn import ParameterGroup
from app.reasoning.model import NTNSM
from .schemas import CheckpointEntry, CheckpointManifest

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"

# Estágio que produz cada grupo
PRODUCING_STAGE = {
    ParameterGroup.BASIC: "pretrain basic",
    ParameterGroup.NUMERICAL: "pretrain nt",
    ParameterGroup.COMPREHENSIVE: "train",
    ParameterGroup.CLASSIFIER: "pretrain classifier",
}


def group_modules(model: NTNSM) -> Dict[ParameterGroup, nn.Module]:
    return {
        ParameterGroup.BASIC: model.basic,
        ParameterGroup.NUMERICAL: model.numerical,
        ParameterGroup.COMPREHENSIVE: model.comprehensive,
        ParameterGroup.CLASSIFIER: model.classifier,
    }


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def read_manifest(directory: Path) -> Optional[CheckpointManifest]:
    path = Path(directory) / MANIFEST_FILE
    if not path.exists():
        return None
    try:
        return CheckpointManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise LoadError(f"manifest inválido: {exc}", path=str(path)) from exc


def save_checkpoints(
    model: NTNSM,
    directory: Path,
    config: Settings,
    groups: Iterable[ParameterGroup],
) -> CheckpointManifest:
    """
    Grava os grupos pedidos e atualiza o manifest; grupos já salvos por
    outros estágios são preservados com o hash de configuração que os gerou.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = read_manifest(directory)
    if manifest is None:
        manifest = CheckpointManifest(config_hash=config.config_hash(), seed=config.seed)
    manifest.config_hash = config.config_hash()
    manifest.seed = config.seed
    modules = group_modules(model)
    for group in groups:
        path = directory / f"{group.value}.pt"
        torch.save(modules[group].state_dict(), path)
        manifest.groups[group.value] = CheckpointEntry(file=path.name, sha256=file_sha256(path), config_hash=manifest.config_hash)
        logger.info(f"💾 Checkpoint {group.value} salvo em {path}")
    (directory / MANIFEST_FILE).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    return manifest


def load_checkpoints(
    model: NTNSM,
    directory: Path,
    config: Settings,
    groups: Iterable[ParameterGroup],
) -> CheckpointManifest:
    """Carrega os grupos exigidos; a falta de qualquer um é um erro de pipeline com o estágio que o produz."""
    directory = Path(directory)
    manifest = read_manifest(directory)
    modules = group_modules(model)
    for group in groups:
        stage = PRODUCING_STAGE[group]
        if manifest is None or group.value not in manifest.groups:
            raise PipelineError(f"checkpoint {group.value} ausente; execute o estágio antes", stage=stage, directory=str(directory))
        entry = manifest.groups[group.value]
        if entry.config_hash and entry.config_hash != config.config_hash():
            logger.warning(f"⚠️ Checkpoint {group.value} foi gerado com outra configuração ({entry.config_hash[:12]})")
        path = directory / entry.file
        if not path.exists():
            raise PipelineError(f"arquivo de checkpoint ausente: {entry.file}", stage=stage)
        if file_sha256(path) != entry.sha256:
            raise LoadError("SHA-256 do checkpoint não confere com o manifest", path=str(path))
        try:
            modules[group].load_state_dict(torch.load(path, weights_only=True))
        except RuntimeError as exc:
            raise LoadError(f"checkpoint incompatível com o modelo: {exc}", path=str(path)) from exc
        logger.info(f"Checkpoint {group.value} carregado de {path}")
    return manifest
