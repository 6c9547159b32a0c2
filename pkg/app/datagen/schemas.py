"""Registros JSON-lines dos conjuntos de QA e de pré-treino."""
import json
from pathlib import Path
from typing import Iterable, List, Optional, Type, TypeVar

from pydantic import BaseModel, Field, ValidationError, model_validator

from app.core.exceptions import LoadError

Record = TypeVar("Record", bound=BaseModel)


class QARecord(BaseModel):
    id: str
    question: str
    topic_entities: List[str] = Field(min_length=1)
    answers: List[str]
    ordinal: bool = False
    # Relação numérica anotada nas perguntas ordinais (usada pelo QGND)
    relation: Optional[str] = None
    hub_relation: Optional[str] = None
    determiner: Optional[str] = None


class PretrainRecord(BaseModel):
    q: str
    relation: str
    values: List[str]
    answer_index: int

    @model_validator(mode="after")
    def _answer_in_range(self) -> "PretrainRecord":
        if not 0 <= self.answer_index < len(self.values):
            raise ValueError(f"answer_index {self.answer_index} fora de [0, {len(self.values)})")
        return self


def write_jsonl(path: Path, records: Iterable[BaseModel]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(json.dumps(record.model_dump(mode="json"), sort_keys=True, ensure_ascii=False) + "\n")
            count += 1
    return count


def read_jsonl(path: Path, model: Type[Record]) -> List[Record]:
    records: List[Record] = []
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                records.append(model.model_validate_json(line))
            except ValidationError as exc:
                raise LoadError(f"registro inválido: {exc.errors()[0]['msg']}", line_number=line_number, path=str(path)) from exc
    return records
