"""
Determinantes ordinais e o oráculo simbólico que rotula respostas.
"""
import enum
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence

from app.core.exceptions import OracleError, UsageError
from app.kb.models import KnowledgeBase, NumericValue, RelationKind


class Aggregation(str, enum.Enum):
    MIN = "min"
    MAX = "max"


@dataclass(frozen=True)
class OrdinalDeterminer:
    surface: str
    aggregation: Aggregation
    kind: RelationKind


DETERMINERS = (
    OrdinalDeterminer("largest", Aggregation.MAX, RelationKind.SIZE),
    OrdinalDeterminer("fewest", Aggregation.MIN, RelationKind.SIZE),
    OrdinalDeterminer("biggest", Aggregation.MAX, RelationKind.SIZE),
    OrdinalDeterminer("smallest", Aggregation.MIN, RelationKind.SIZE),
    OrdinalDeterminer("earliest", Aggregation.MIN, RelationKind.TIME),
    OrdinalDeterminer("latest", Aggregation.MAX, RelationKind.TIME),
    OrdinalDeterminer("most recent", Aggregation.MAX, RelationKind.TIME),
    OrdinalDeterminer("first", Aggregation.MIN, RelationKind.TIME),
    OrdinalDeterminer("last", Aggregation.MAX, RelationKind.TIME),
)

BY_SURFACE: Dict[str, OrdinalDeterminer] = {determiner.surface: determiner for determiner in DETERMINERS}


def get_determiner(surface: str) -> OrdinalDeterminer:
    try:
        return BY_SURFACE[surface]
    except KeyError:
        raise UsageError("determinante ordinal desconhecido", surface=surface) from None


def determiners_for(kind: RelationKind) -> List[OrdinalDeterminer]:
    return [determiner for determiner in DETERMINERS if determiner.kind == kind]


def extremal_indices(sort_keys: Sequence[float], determiner: OrdinalDeterminer) -> List[int]:
    """Posições que atingem o MIN/MAX das chaves (todas, em caso de empate)."""
    if not sort_keys:
        return []
    target = max(sort_keys) if determiner.aggregation == Aggregation.MAX else min(sort_keys)
    return [position for position, key in enumerate(sort_keys) if key == target]


def entity_value(kb: KnowledgeBase, entity: str, relation: str, determiner: OrdinalDeterminer) -> NumericValue:
    """Valor da entidade sob a relação; com vários valores, o extremo do determinante."""
    values = [t.tail for t in kb.out_triples(entity) if t.relation == relation]
    if not values:
        raise OracleError("entidade sem valor", missing=[entity], relation=relation)
    best = extremal_indices([value.sort_key for value in values], determiner)[0]
    return values[best]


def ordinal_oracle(kb: KnowledgeBase, candidates: Iterable[str], relation: str, determiner: OrdinalDeterminer) -> List[str]:
    """Entidades candidatas cujo valor atinge o MIN/MAX; empates retornam todas."""
    meta = kb.relations.get(relation)
    if meta is None or not meta.is_numerical:
        raise UsageError("oráculo exige relação numérica", relation=relation)
    entities = sorted(set(candidates))
    missing = [entity for entity in entities if not any(t.relation == relation for t in kb.out_triples(entity))]
    if missing:
        raise OracleError("candidatos sem valor sob a relação", missing=missing, relation=relation)
    keys = [entity_value(kb, entity, relation, determiner).sort_key for entity in entities]
    return [entities[position] for position in extremal_indices(keys, determiner)]
