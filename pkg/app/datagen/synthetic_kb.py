"""
Gerador da KB sintética: hubs (país, artista, emissora) com vizinhos de
primeira ordem que carregam relações numéricas de tamanho e de tempo,
mais relações de preenchimento que adicionam ruído ao subgrafo.
"""
import logging
import random
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Callable, Dict, List, Optional, Set, Tuple

from app.core.exceptions import GenerationError
from app.kb.models import KnowledgeBase, RelationKind, RelationMeta, Triple
from app.kb.normalize import load_unit_table, normalize_value
from app.kb.schemas import UnitTable

logger = logging.getLogger(__name__)

SYLLABLES = (
    "ka", "lo", "mi", "ra", "ten", "vo", "shi", "an", "bel", "dor", "em", "fi", "gu", "ha", "ir",
    "jo", "ke", "lu", "mar", "no", "pe", "qui", "ro", "sa", "tu", "ve", "wi", "xa", "yo", "zen",
)

TIE_RATE = 0.1


def _area(rng: random.Random) -> str:
    if rng.random() < 0.15:
        return f"{rng.randint(100, 20000):,} km2"
    return f"{rng.randint(50, 8000):,} mi2"


def _population(rng: random.Random) -> str:
    return f"{rng.randint(10_000, 5_000_000):,}"


def _year(rng: random.Random) -> str:
    return str(rng.randint(1000, 2000))


def _dotted_date(rng: random.Random) -> str:
    day = date(1990, 1, 1) + timedelta(days=rng.randint(0, 12000))
    return f"{day.year:04d}.{day.month:02d}.{day.day:02d}"


def _dashed_date(rng: random.Random) -> str:
    day = date(1970, 1, 1) + timedelta(days=rng.randint(0, 19000))
    return day.isoformat()


def _count(low: int, high: int) -> Callable[[random.Random], str]:
    return lambda rng: str(rng.randint(low, high))


@dataclass(frozen=True)
class NumericSlot:
    meta: RelationMeta
    sample: Callable[[random.Random], str]


@dataclass(frozen=True)
class HubSchema:
    hub_relation: str
    numeric: Tuple[NumericSlot, ...]
    # Relação não numérica extra do hub para um dos seus membros (ex.: capital)
    pick_relation: Optional[str] = None
    # Relação dos membros para entidades de um pequeno conjunto compartilhado
    shared_relation: Optional[str] = None


SCHEMAS = (
    HubSchema(
        hub_relation="location.country.city",
        numeric=(
            NumericSlot(RelationMeta("location.city.area", True, RelationKind.SIZE, "mi2"), _area),
            NumericSlot(RelationMeta("location.city.population", True, RelationKind.SIZE), _population),
            NumericSlot(RelationMeta("location.city.founded", True, RelationKind.TIME), _year),
        ),
        pick_relation="location.country.capital",
    ),
    HubSchema(
        hub_relation="music.artist.album",
        numeric=(
            NumericSlot(RelationMeta("music.album.release_date", True, RelationKind.TIME), _dotted_date),
            NumericSlot(RelationMeta("music.album.num_of_tracks", True, RelationKind.SIZE), _count(6, 24)),
        ),
        shared_relation="music.album.genre",
    ),
    HubSchema(
        hub_relation="tv.network.program",
        numeric=(
            NumericSlot(RelationMeta("tv.program.num_of_episodes", True, RelationKind.SIZE), _count(6, 300)),
            NumericSlot(RelationMeta("tv.program.premiere_date", True, RelationKind.TIME), _dashed_date),
        ),
    ),
)

GENRES = 4
FILLER_PREFIX = "misc."


class _Names:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used: Set[str] = set()

    def fresh(self) -> str:
        while True:
            name = "".join(self.rng.choice(SYLLABLES) for _ in range(self.rng.randint(2, 3)))
            if name not in self.used:
                self.used.add(name)
                return name


def gen_synthetic_kb(
    seed: int,
    n_entities: int,
    n_relations: int = 2,
    numeric_fraction: float = 0.9,
    unit_table: Optional[UnitTable] = None,
) -> Tuple[KnowledgeBase, UnitTable]:
    """
    Gera a KB sintética. `n_relations` é o número de relações de
    preenchimento; cada hub garante ao menos dois membros com valor na
    primeira relação numérica do seu esquema.
    """
    if n_entities < 3:
        raise GenerationError("entidades insuficientes para um hub com dois candidatos", n_entities=n_entities)
    if n_relations < 0:
        raise GenerationError("n_relations deve ser >= 0", n_relations=n_relations)
    if not 0.0 < numeric_fraction < 1.0:
        raise GenerationError("numeric_fraction deve estar em (0, 1)", numeric_fraction=numeric_fraction)

    rng = random.Random(seed)
    table = unit_table if unit_table is not None else load_unit_table()
    names = _Names(rng)
    raw: List[Tuple[str, str, str]] = []
    metas: Dict[str, RelationMeta] = {}
    budget = n_entities

    genres: List[str] = []
    if n_entities >= 20:
        genres = [names.fresh() for _ in range(GENRES)]
        budget -= GENRES

    hubs = 0
    while budget >= 3:
        schema = SCHEMAS[hubs % len(SCHEMAS)]
        size = min(budget - 1, rng.randint(3, 7))
        hub = names.fresh()
        members = [names.fresh() for _ in range(size)]
        budget -= size + 1
        hubs += 1
        metas[schema.hub_relation] = RelationMeta(schema.hub_relation, False)
        for member in members:
            raw.append((hub, schema.hub_relation, member))
        if schema.pick_relation:
            metas[schema.pick_relation] = RelationMeta(schema.pick_relation, False)
            raw.append((hub, schema.pick_relation, rng.choice(members)))
        if schema.shared_relation and genres:
            metas[schema.shared_relation] = RelationMeta(schema.shared_relation, False)
            for member in members:
                raw.append((member, schema.shared_relation, rng.choice(genres)))
        for position, slot in enumerate(schema.numeric):
            metas[slot.meta.name] = slot.meta
            drawn: List[str] = []
            for member in members:
                if position > 0 and rng.random() >= numeric_fraction:
                    continue
                if drawn and rng.random() < TIE_RATE:
                    value = rng.choice(drawn)
                else:
                    value = slot.sample(rng)
                drawn.append(value)
                raw.append((member, slot.meta.name, value))

    entities = sorted({head for head, _, _ in raw} | {tail for _, rel, tail in raw if not metas[rel].is_numerical})
    for index in range(n_relations):
        name = f"{FILLER_PREFIX}related_{index}"
        metas[name] = RelationMeta(name, False)
        for _ in range(max(1, len(entities) // 4)):
            head, tail = rng.sample(entities, 2)
            raw.append((head, name, tail))

    triples = []
    for head, relation, tail in raw:
        meta = metas[relation]
        triples.append(Triple(head, relation, normalize_value(tail, meta, table) if meta.is_numerical else tail))
    kb = KnowledgeBase.build(metas.values(), triples)
    logger.info(f"KB sintética: {hubs} hubs, {len(kb.entities)} entidades, {len(kb.triples)} triplas")
    return kb, table
