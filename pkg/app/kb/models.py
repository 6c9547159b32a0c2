import enum
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import networkx as nx


class RelationKind(enum.Enum):
    SIZE = "size"
    TIME = "time"
    NONE = "none"


@dataclass(frozen=True)
class RelationMeta:
    name: str
    is_numerical: bool
    kind: RelationKind = RelationKind.NONE
    unit: str = ""

    def __post_init__(self):
        if (self.kind == RelationKind.NONE) == self.is_numerical:
            raise ValueError(f"relação '{self.name}': kind é none se e somente se não for numérica")

    @property
    def display_name(self) -> str:
        """Nome usado nas perguntas: último segmento, '_' vira espaço."""
        return self.name.split(".")[-1].replace("_", " ")


@dataclass(frozen=True)
class NumericValue:
    raw_text: str
    canonical_tokens: Tuple[str, ...]
    sort_key: float

    @property
    def canonical_text(self) -> str:
        return "".join(self.canonical_tokens)


@dataclass(frozen=True)
class Triple:
    head: str
    relation: str
    tail: Union[str, NumericValue]

    @property
    def is_numerical(self) -> bool:
        return isinstance(self.tail, NumericValue)


@dataclass(frozen=True)
class KnowledgeBase:
    """Base imutável: entidades, relações, triplas e índices por entidade/relação."""

    entities: frozenset
    relations: Mapping[str, RelationMeta]
    triples: Tuple[Triple, ...]
    by_head: Mapping[str, Tuple[Triple, ...]] = field(repr=False)
    by_tail: Mapping[str, Tuple[Triple, ...]] = field(repr=False)
    by_relation: Mapping[str, Tuple[Triple, ...]] = field(repr=False)
    # Grafo não direcionado das relações não numéricas (alcance de vizinhança)
    graph: nx.Graph = field(repr=False, compare=False)

    @classmethod
    def build(cls, relations: Iterable[RelationMeta], triples: Iterable[Triple]) -> "KnowledgeBase":
        relation_map = {meta.name: meta for meta in relations}
        triple_list = list(triples)
        entities = set()
        by_head: Dict[str, List[Triple]] = {}
        by_tail: Dict[str, List[Triple]] = {}
        by_relation: Dict[str, List[Triple]] = {name: [] for name in relation_map}
        for triple in triple_list:
            meta = relation_map.get(triple.relation)
            if meta is None:
                raise ValueError(f"relação não registrada: {triple.relation}")
            if meta.is_numerical != triple.is_numerical:
                raise ValueError(f"cauda incompatível com a relação {triple.relation}")
            entities.add(triple.head)
            by_head.setdefault(triple.head, []).append(triple)
            by_relation[triple.relation].append(triple)
            if not triple.is_numerical:
                entities.add(triple.tail)
                by_tail.setdefault(triple.tail, []).append(triple)
        def freeze(index: Dict[str, List[Triple]]) -> Mapping[str, Tuple[Triple, ...]]:
            return MappingProxyType({key: tuple(value) for key, value in index.items()})

        graph = nx.Graph()
        graph.add_nodes_from(sorted(entities))
        graph.add_edges_from((t.head, t.tail) for t in triple_list if not t.is_numerical)
        return cls(
            entities=frozenset(entities),
            relations=MappingProxyType(relation_map),
            triples=tuple(triple_list),
            by_head=freeze(by_head),
            by_tail=freeze(by_tail),
            by_relation=freeze(by_relation),
            graph=graph,
        )

    def numerical_relations(self) -> List[RelationMeta]:
        return sorted((meta for meta in self.relations.values() if meta.is_numerical), key=lambda m: m.name)

    def out_triples(self, entity: str) -> Tuple[Triple, ...]:
        return self.by_head.get(entity, ())

    def in_triples(self, entity: str) -> Tuple[Triple, ...]:
        return self.by_tail.get(entity, ())


@dataclass(frozen=True)
class Subgraph:
    entities: Tuple[str, ...]
    triples: Tuple[Triple, ...]
    topic_entities: Tuple[str, ...]
    scores: Optional[Mapping[str, float]] = None

    def __post_init__(self):
        members = set(self.entities)
        if not set(self.topic_entities) <= members:
            raise ValueError("subgrafo deve conter todas as entidades de tópico")
        for triple in self.triples:
            if triple.is_numerical:
                raise ValueError("subgrafo contém apenas relações não numéricas")
            if triple.head not in members or triple.tail not in members:
                raise ValueError("tripla com extremidade fora do subgrafo")

    def index(self) -> Dict[str, int]:
        return {entity: position for position, entity in enumerate(self.entities)}

    def __len__(self) -> int:
        return len(self.entities)
