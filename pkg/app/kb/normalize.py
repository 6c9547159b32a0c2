"""
Normalização de valores numéricos: datas viram dias desde 1970-01-01
(calendário gregoriano proléptico) e tamanhos são convertidos para a
unidade declarada da relação via tabela de conversão.
"""
import json
import math
import re
from datetime import date
from decimal import Decimal
from functools import lru_cache
from pathlib import Path
from typing import Optional, Tuple

from app.core.exceptions import NormalizationError
from .models import NumericValue, RelationKind, RelationMeta
from .schemas import UnitTable, unit_table_adapter

DEFAULT_UNIT_TABLE_PATH = Path(__file__).parent / "data" / "units.json"

EPOCH = date(1970, 1, 1)

NUMBER_PATTERN = re.compile(r"^\s*(?P<number>[+-]?(?:\d[\d,]*(?:\.\d*)?|\.\d+))\s*(?P<unit>\S+)?\s*$")

DATE_LAYOUTS = (
    re.compile(r"^(?P<year>\d{4})\.(?P<month>\d{1,2})\.(?P<day>\d{1,2})$"),
    re.compile(r"^(?P<year>\d{4})-(?P<month>\d{1,2})-(?P<day>\d{1,2})$"),
    re.compile(r"^(?P<year>\d{4})$"),
)


@lru_cache(maxsize=8)
def _read_unit_table(path: str) -> Tuple[Tuple[str, Tuple[str, float]], ...]:
    with open(path, encoding="utf-8") as handle:
        table = unit_table_adapter.validate_python(json.load(handle))
    return tuple(sorted(table.items()))


def load_unit_table(path: Optional[Path] = None) -> UnitTable:
    """Lê a tabela de unidades (padrão: a tabela distribuída com o pacote)."""
    return dict(_read_unit_table(str(path or DEFAULT_UNIT_TABLE_PATH)))


def clean_unit(unit: str) -> str:
    return unit.strip().lower().replace("²", "2").replace("³", "3")


def format_magnitude(value: float) -> str:
    """Texto decimal sem expoente que volta exatamente ao mesmo float."""
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return format(Decimal(repr(value)), "f")


def _normalize_time(raw: str) -> NumericValue:
    text = raw.strip()
    for layout in DATE_LAYOUTS:
        match = layout.match(text)
        if not match:
            continue
        parts = match.groupdict()
        try:
            day = date(int(parts["year"]), int(parts.get("month") or 1), int(parts.get("day") or 1))
        except ValueError as exc:
            raise NormalizationError(f"data inválida: {exc}", raw=raw) from exc
        canonical = f"{day.year:04d}.{day.month:02d}.{day.day:02d}"
        return NumericValue(
            raw_text=raw,
            canonical_tokens=tuple(canonical),
            sort_key=float(day.toordinal() - EPOCH.toordinal()),
        )
    raise NormalizationError("formato de data não reconhecido", raw=raw)


def _normalize_size(raw: str, meta: RelationMeta, unit_table: UnitTable) -> NumericValue:
    match = NUMBER_PATTERN.match(raw)
    if not match:
        raise NormalizationError("valor numérico não reconhecido", raw=raw)
    magnitude = float(match.group("number").replace(",", ""))
    unit = match.group("unit")
    if unit:
        source = clean_unit(unit)
        target = clean_unit(meta.unit)
        if source != target:
            if not target:
                raise NormalizationError("unidade informada para relação sem unidade", raw=raw, unit=unit)
            if source not in unit_table or target not in unit_table:
                raise NormalizationError("unidade desconhecida", raw=raw, unit=unit)
            source_base, source_factor = unit_table[source]
            target_base, target_factor = unit_table[target]
            if source_base != target_base:
                raise NormalizationError("unidades incompatíveis", raw=raw, unit=unit, target=meta.unit)
            magnitude = magnitude * source_factor / target_factor
    if not math.isfinite(magnitude):
        raise NormalizationError("valor não finito", raw=raw)
    return NumericValue(
        raw_text=raw,
        canonical_tokens=tuple(format_magnitude(magnitude)),
        sort_key=magnitude,
    )


def normalize_value(raw: str, meta: RelationMeta, unit_table: Optional[UnitTable] = None) -> NumericValue:
    """Converte o texto bruto de uma cauda numérica em NumericValue."""
    if not meta.is_numerical:
        raise NormalizationError(f"relação '{meta.name}' não é numérica", raw=raw)
    if meta.kind == RelationKind.TIME:
        return _normalize_time(raw)
    return _normalize_size(raw, meta, unit_table if unit_table is not None else load_unit_table())
