"""
Hierarquia de erros do projeto.

Cada erro carrega uma mensagem legível (`detail`) e um dicionário de contexto
com os campos relevantes (linha do arquivo, caminho do parâmetro, estágio...).
"""
from typing import Any, Dict, List, Optional


class KBQAError(Exception):
    """Erro base de todas as operações do projeto."""

    def __init__(self, detail: str, **context: Any):
        super().__init__(detail)
        self.detail = detail
        self.context: Dict[str, Any] = context

    def __str__(self) -> str:
        if not self.context:
            return self.detail
        extras = ", ".join(f"{key}={value!r}" for key, value in self.context.items())
        return f"{self.detail} ({extras})"


class ShapeError(KBQAError):
    pass


class ContractViolation(KBQAError):
    pass


class GradCheckError(KBQAError):
    pass


class LoadError(KBQAError):
    def __init__(self, detail: str, line_number: Optional[int] = None, **context: Any):
        super().__init__(detail, line_number=line_number, **context)
        self.line_number = line_number


class NormalizationError(KBQAError):
    def __init__(self, detail: str, raw: str, **context: Any):
        super().__init__(detail, raw=raw, **context)
        self.raw = raw


class RetrievalError(KBQAError):
    pass


class ConfigurationError(KBQAError):
    pass


class UsageError(KBQAError):
    pass


class EncodingError(KBQAError):
    pass


class DataValidationError(KBQAError):
    pass


class ReasoningError(KBQAError):
    pass


class OracleError(KBQAError):
    def __init__(self, detail: str, missing: List[str], **context: Any):
        super().__init__(detail, missing=missing, **context)
        self.missing = missing


class GenerationError(KBQAError):
    pass


class PipelineError(KBQAError):
    def __init__(self, detail: str, stage: str, **context: Any):
        super().__init__(detail, stage=stage, **context)
        self.stage = stage


class EvaluationError(KBQAError):
    pass
