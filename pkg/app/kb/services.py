import json
import logging
from dataclasses import replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
from pydantic import ValidationError

from app.core.exceptions import ConfigurationError, LoadError, NormalizationError, RetrievalError, UsageError
from .models import KnowledgeBase, NumericValue, RelationMeta, Subgraph, Triple
from .normalize import load_unit_table, normalize_value
from .schemas import RelationMetaRecord, UnitTable

logger = logging.getLogger(__name__)

TRIPLES_FILE = "triples.tsv"
RELATIONS_FILE = "relations.jsonl"
UNITS_FILE = "units.json"


def _read_relation_meta(path: Path) -> Dict[str, RelationMeta]:
    relations: Dict[str, RelationMeta] = {}
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = RelationMetaRecord.model_validate_json(line)
            except ValidationError as exc:
                raise LoadError(f"metadado de relação inválido: {exc.errors()[0]['msg']}", line_number=line_number, path=str(path)) from exc
            if record.name in relations:
                raise LoadError("relação declarada duas vezes", line_number=line_number, relation=record.name)
            relations[record.name] = record.to_meta()
    return relations


def load_kb(
    triples_path: Path,
    relation_meta_path: Path,
    unit_table: Optional[UnitTable] = None,
) -> KnowledgeBase:
    """
    Lê a base de triplas (TSV head/relation/tail) e os metadados das relações.

    Caudas de relações numéricas viram NumericValue. Sem tabela explícita,
    usa o `units.json` ao lado do arquivo de triplas, se existir.
    """
    triples_path = Path(triples_path)
    if unit_table is None:
        sibling = triples_path.parent / UNITS_FILE
        unit_table = load_unit_table(sibling if sibling.exists() else None)
    relations = _read_relation_meta(Path(relation_meta_path))

    triples: List[Triple] = []
    with open(triples_path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise LoadError("linha deve ter 3 campos separados por tab", line_number=line_number)
            head, relation, tail = parts
            meta = relations.get(relation)
            if meta is None:
                raise LoadError("relação ausente dos metadados", line_number=line_number, relation=relation)
            if meta.is_numerical:
                try:
                    tail = normalize_value(tail, meta, unit_table)
                except NormalizationError as exc:
                    raise LoadError(f"cauda numérica inválida: {exc.detail}", line_number=line_number, raw=exc.raw) from exc
            triples.append(Triple(head=head, relation=relation, tail=tail))

    kb = KnowledgeBase.build(relations.values(), triples)
    logger.info(f"KB carregada: {len(kb.entities)} entidades, {len(kb.relations)} relações, {len(kb.triples)} triplas")
    return kb


def write_kb(kb: KnowledgeBase, directory: Path, unit_table: Optional[UnitTable] = None) -> Tuple[Path, Path]:
    """Inverso determinístico de load_kb: triplas, metadados e tabela de unidades."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    triples_path = directory / TRIPLES_FILE
    relations_path = directory / RELATIONS_FILE

    with open(triples_path, "w", encoding="utf-8", newline="\n") as handle:
        for triple in kb.triples:
            tail = triple.tail.raw_text if isinstance(triple.tail, NumericValue) else triple.tail
            handle.write(f"{triple.head}\t{triple.relation}\t{tail}\n")
    with open(relations_path, "w", encoding="utf-8", newline="\n") as handle:
        for name in sorted(kb.relations):
            handle.write(RelationMetaRecord.from_meta(kb.relations[name]).model_dump_json() + "\n")
    table = unit_table if unit_table is not None else load_unit_table()
    with open(directory / UNITS_FILE, "w", encoding="utf-8", newline="\n") as handle:
        json.dump({unit: list(entry) for unit, entry in sorted(table.items())}, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return triples_path, relations_path


def _check_topics(kb: KnowledgeBase, topics: Sequence[str]) -> Tuple[str, ...]:
    if not topics:
        raise RetrievalError("pergunta sem entidade de tópico")
    unknown = [topic for topic in topics if topic not in kb.entities]
    if unknown:
        raise RetrievalError("entidade de tópico desconhecida", unknown=unknown)
    return tuple(dict.fromkeys(topics))


def two_hop_subgraph(kb: KnowledgeBase, topic_entities: Sequence[str], hops: int = 2) -> Subgraph:
    """Entidades a até `hops` saltos não numéricos (sem direção) dos tópicos."""
    topics = _check_topics(kb, topic_entities)
    reached = set()
    for topic in topics:
        reached.update(nx.single_source_shortest_path_length(kb.graph, topic, cutoff=hops))

    entities = tuple(sorted(reached))
    triples = []
    for entity in entities:
        for triple in kb.out_triples(entity):
            if not triple.is_numerical and triple.tail in reached:
                triples.append(triple)
    return Subgraph(entities=entities, triples=tuple(triples), topic_entities=topics)


def pagerank_scores(subgraph: Subgraph, topic_entities: Sequence[str], damping: float = 0.85) -> Dict[str, float]:
    """PageRank personalizado com reinício uniforme nos tópicos."""
    if not 0.0 < damping < 1.0:
        raise ConfigurationError("damping deve estar em (0, 1)", damping=damping)
    graph = nx.Graph()
    graph.add_nodes_from(subgraph.entities)
    graph.add_edges_from((triple.head, triple.tail) for triple in subgraph.triples)
    topics = list(dict.fromkeys(topic_entities))
    personalization = {topic: 1.0 / len(topics) for topic in topics}
    try:
        return nx.pagerank(graph, alpha=damping, personalization=personalization, max_iter=1000, tol=1e-12)
    except nx.PowerIterationFailedConvergence as exc:
        raise RetrievalError("PageRank não convergiu", entities=len(subgraph)) from exc


def personalized_pagerank(
    subgraph: Subgraph,
    topic_entities: Sequence[str],
    damping: float = 0.85,
    top_n: int = 500,
) -> Subgraph:
    """Mantém as `top_n` entidades de maior PPR (tópicos sempre mantidos)."""
    topics = tuple(dict.fromkeys(topic_entities))
    if top_n < len(topics):
        raise ConfigurationError("top_n menor que o número de tópicos", top_n=top_n, topics=len(topics))
    scores = pagerank_scores(subgraph, topics, damping)
    if top_n >= len(subgraph):
        return replace(subgraph, scores=scores)

    keep = set(topics)
    # Empates de score resolvidos pelo id da entidade
    for entity in sorted(subgraph.entities, key=lambda e: (-scores[e], e)):
        if len(keep) >= top_n:
            break
        keep.add(entity)
    entities = tuple(entity for entity in subgraph.entities if entity in keep)
    triples = tuple(t for t in subgraph.triples if t.head in keep and t.tail in keep)
    logger.debug(f"PPR: {len(subgraph)} -> {len(entities)} entidades")
    return Subgraph(entities=entities, triples=triples, topic_entities=subgraph.topic_entities, scores=scores)


def retrieve_subgraph(
    kb: KnowledgeBase,
    topic_entities: Sequence[str],
    damping: float = 0.85,
    top_n: int = 500,
) -> Subgraph:
    """Recuperação completa: vizinhança de dois saltos seguida da poda por PPR."""
    return personalized_pagerank(two_hop_subgraph(kb, topic_entities), topic_entities, damping, top_n)


def numeric_values_for(kb: KnowledgeBase, relation: str, entities: Iterable[str]) -> List[Tuple[str, NumericValue]]:
    meta = kb.relations.get(relation)
    if meta is None or not meta.is_numerical:
        raise UsageError("relação não numérica", relation=relation)
    members = set(entities)
    return [(triple.head, triple.tail) for triple in kb.by_relation[relation] if triple.head in members]
