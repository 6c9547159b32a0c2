from typing import Dict, Literal, Optional, Tuple

from pydantic import BaseModel, TypeAdapter, model_validator

from .models import RelationKind, RelationMeta


class RelationMetaRecord(BaseModel):
    """Uma linha do arquivo de metadados de relações (JSON-lines)."""

    name: str
    numerical: bool
    kind: Optional[Literal["size", "time", "none"]] = None
    unit: str = ""

    @model_validator(mode="after")
    def _kind_matches_numerical(self) -> "RelationMetaRecord":
        if self.numerical and self.kind not in ("size", "time"):
            raise ValueError(f"relação numérica '{self.name}' precisa de kind 'size' ou 'time'")
        if not self.numerical and self.kind not in (None, "none"):
            raise ValueError(f"relação não numérica '{self.name}' não pode ter kind '{self.kind}'")
        return self

    def to_meta(self) -> RelationMeta:
        kind = RelationKind(self.kind) if self.numerical else RelationKind.NONE
        return RelationMeta(name=self.name, is_numerical=self.numerical, kind=kind, unit=self.unit)

    @classmethod
    def from_meta(cls, meta: RelationMeta) -> "RelationMetaRecord":
        return cls(
            name=meta.name,
            numerical=meta.is_numerical,
            kind=meta.kind.value if meta.is_numerical else None,
            unit=meta.unit,
        )


# unidade -> (unidade base, multiplicador)
UnitTable = Dict[str, Tuple[str, float]]
unit_table_adapter = TypeAdapter(UnitTable)
