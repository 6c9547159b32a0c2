"""
Geradores de dados: corpus de QA, QIND, QGND, aumento por template e
partições determinísticas.
"""
import logging
import random
from typing import Dict, List, Optional, Sequence, Tuple, TypeVar

from app.core.exceptions import ConfigurationError, GenerationError
from app.kb.models import KnowledgeBase, NumericValue
from .determiners import Aggregation, determiners_for, entity_value, extremal_indices, get_determiner, ordinal_oracle
from .models import AugmentedQAPair, PretrainInstance, QGNDReport, TemplateSlot
from .schemas import QARecord
from .synthetic_kb import FILLER_PREFIX

logger = logging.getLogger(__name__)

Item = TypeVar("Item")

TEMPLATE = "What is the {hub_relation} of {hub} that has the {determiner} {relation} ?"
CORPUS_ORDINAL = "Which {hub_relation} of {hub} has the {determiner} {relation} ?"
CORPUS_FACTOID = "What is the {relation} of {head} ?"


def _valued(kb: KnowledgeBase, relation: str) -> set:
    return {triple.head for triple in kb.by_relation[relation]}


def template_slots(kb: KnowledgeBase, include_filler: bool = False) -> List[TemplateSlot]:
    """Todos os (e_h, r_h, r) com ao menos dois candidatos que têm valor sob r."""
    numerical = [meta.name for meta in kb.numerical_relations()]
    valued = {name: _valued(kb, name) for name in numerical}
    slots = []
    for hub_relation in sorted(kb.relations):
        meta = kb.relations[hub_relation]
        if meta.is_numerical or (hub_relation.startswith(FILLER_PREFIX) and not include_filler):
            continue
        groups: Dict[str, List[str]] = {}
        for triple in kb.by_relation[hub_relation]:
            members = groups.setdefault(triple.head, [])
            if triple.tail not in members:
                members.append(triple.tail)
        for hub in sorted(groups):
            for relation in numerical:
                candidates = tuple(sorted(e for e in groups[hub] if e in valued[relation]))
                if len(candidates) >= 2:
                    slots.append(TemplateSlot(hub, hub_relation, relation, candidates))
    return slots


def _ordinal_question(kb: KnowledgeBase, slot: TemplateSlot, rng: random.Random, layout: str):
    meta = kb.relations[slot.relation]
    determiner = rng.choice(determiners_for(meta.kind))
    question = layout.format(
        hub_relation=kb.relations[slot.hub_relation].display_name,
        hub=slot.hub,
        determiner=determiner.surface,
        relation=meta.display_name,
    )
    return question, determiner, ordinal_oracle(kb, slot.candidates, slot.relation, determiner)


def gen_qa_corpus(kb: KnowledgeBase, n_questions: int, ordinal_fraction: float = 0.3, seed: int = 0) -> List[QARecord]:
    """
    Corpus de QA "real" em escala de bancada: perguntas factuais de um salto
    e perguntas ordinais (redação diferente do template de aumento), estas
    anotadas com a relação numérica que deriva a resposta.
    """
    if n_questions < 1:
        raise GenerationError("n_questions deve ser >= 1", n_questions=n_questions)
    rng = random.Random(seed)
    facts = [t for t in kb.triples if not t.is_numerical and not t.relation.startswith(FILLER_PREFIX)]
    slots = template_slots(kb)
    n_ordinal = round(n_questions * ordinal_fraction)
    if n_ordinal and not slots:
        raise GenerationError("KB sem hubs para perguntas ordinais")
    if n_questions - n_ordinal and not facts:
        raise GenerationError("KB sem fatos para perguntas factuais")

    records = []
    for position in range(n_questions):
        if position < n_ordinal:
            slot = rng.choice(slots)
            question, determiner, answers = _ordinal_question(kb, slot, rng, CORPUS_ORDINAL)
            records.append(dict(
                question=question,
                topic_entities=[slot.hub],
                answers=answers,
                ordinal=True,
                relation=slot.relation,
                hub_relation=slot.hub_relation,
                determiner=determiner.surface,
            ))
        else:
            fact = rng.choice(facts)
            answers = sorted({t.tail for t in kb.out_triples(fact.head) if t.relation == fact.relation})
            question = CORPUS_FACTOID.format(relation=kb.relations[fact.relation].display_name, head=fact.head)
            records.append(dict(question=question, topic_entities=[fact.head], answers=answers, ordinal=False))
    rng.shuffle(records)
    logger.info(f"Corpus de QA: {n_questions} perguntas ({n_ordinal} ordinais)")
    return [QARecord(id=f"qa-{index:05d}", **fields) for index, fields in enumerate(records)]


def _distinct_values(kb: KnowledgeBase, relation: str) -> List[NumericValue]:
    distinct: Dict[float, NumericValue] = {}
    for triple in kb.by_relation[relation]:
        distinct.setdefault(triple.tail.sort_key, triple.tail)
    return list(distinct.values())


def gen_qind(kb: KnowledgeBase, n_instances: int, n_range: Tuple[int, int] = (2, 50), seed: int = 0) -> List[PretrainInstance]:
    """
    QIND: relação sorteada, N valores de chaves distintas, determinante do
    mesmo tipo; o rótulo vem do oráculo. Só são sorteadas relações com pelo
    menos n_range[0] valores distintos, então todo N fica em n_range.
    """
    low, high = n_range
    if low < 2 or high < low:
        raise ConfigurationError("n_range deve satisfazer 2 <= min <= max", n_range=n_range)
    pools = {meta.name: _distinct_values(kb, meta.name) for meta in kb.numerical_relations()}
    sizes = {name: len(values) for name, values in pools.items()}
    pools = {name: values for name, values in pools.items() if len(values) >= low}
    if not pools:
        raise GenerationError("nenhuma relação numérica tem valores distintos suficientes", n_range=n_range, largest=max(sizes.values(), default=0))
    kinds = {kb.relations[name].kind for name in pools}
    if len(kinds) < 2:
        logger.warning(f"QIND: apenas relações do tipo {sorted(k.value for k in kinds)}")

    rng = random.Random(seed)
    names = sorted(pools)
    instances = []
    for _ in range(n_instances):
        relation = rng.choice(names)
        pool = pools[relation]
        count = rng.randint(low, min(high, len(pool)))
        values = tuple(rng.sample(pool, count))
        determiner = rng.choice(determiners_for(kb.relations[relation].kind))
        answer = extremal_indices([value.sort_key for value in values], determiner)[0]
        instances.append(PretrainInstance(q=determiner.surface, relation=relation, values=values, answer_index=answer))
    logger.info(f"QIND: {len(instances)} instâncias sobre {len(names)} relações")
    return instances


def _respects(key: float, gold: float, aggregation: Aggregation) -> bool:
    return key < gold if aggregation == Aggregation.MAX else key > gold


def gen_qgnd(
    records: Sequence[QARecord],
    kb: KnowledgeBase,
    distractors_per_instance: int = 9,
    seed: int = 0,
) -> Tuple[List[PretrainInstance], QGNDReport]:
    """
    QGND: o número da resposta anotada é o rótulo; distratores vêm primeiro
    dos irmãos do hub e depois de valores globais da relação que respeitam
    o determinante. Rótulos não extremos são mantidos e reportados.
    """
    rng = random.Random(seed)
    report = QGNDReport()
    instances = []
    for record in records:
        if not (record.ordinal and record.relation and record.determiner):
            continue
        meta = kb.relations.get(record.relation)
        if meta is None or not meta.is_numerical:
            report.skipped.append(record.id)
            continue
        determiner = get_determiner(record.determiner)
        valued = _valued(kb, record.relation)
        gold_entity = next((answer for answer in record.answers if answer in valued), None)
        if gold_entity is None:
            report.skipped.append(record.id)
            continue
        gold = entity_value(kb, gold_entity, record.relation, determiner)

        taken = {gold.sort_key}
        distractors: List[NumericValue] = []
        siblings = []
        for topic in record.topic_entities:
            for triple in kb.out_triples(topic):
                if triple.is_numerical or triple.tail == gold_entity or triple.tail not in valued:
                    continue
                if record.hub_relation and triple.relation != record.hub_relation:
                    continue
                siblings.append(entity_value(kb, triple.tail, record.relation, determiner))
        rng.shuffle(siblings)
        for value in siblings:
            if len(distractors) >= distractors_per_instance:
                break
            if value.sort_key not in taken:
                taken.add(value.sort_key)
                distractors.append(value)
        if len(distractors) < distractors_per_instance:
            pool = [
                value for value in _distinct_values(kb, record.relation)
                if value.sort_key not in taken and _respects(value.sort_key, gold.sort_key, determiner.aggregation)
            ]
            distractors += rng.sample(pool, min(len(pool), distractors_per_instance - len(distractors)))

        if not distractors:
            report.rejected.append(record.id)
            continue
        values = [gold] + distractors
        order = list(range(len(values)))
        rng.shuffle(order)
        instance = PretrainInstance(
            q=record.question,
            relation=record.relation,
            values=tuple(values[i] for i in order),
            answer_index=order.index(0),
        )
        if not instance.is_consistent(determiner):
            report.inconsistent.append(record.id)
        instances.append(instance)

    report.emitted = len(instances)
    if report.skipped or report.rejected:
        logger.warning(f"⚠️ QGND: {len(report.skipped)} entradas sem valor, {len(report.rejected)} com menos de 2 números")
    if report.inconsistent:
        logger.warning(f"⚠️ QGND: {len(report.inconsistent)} rótulos não extremos mantidos")
    logger.info(f"QGND: {report.emitted} instâncias")
    return instances, report


def gen_augmented(
    kb: KnowledgeBase,
    n_pairs: int,
    seed: int = 0,
    slots: Optional[Sequence[TemplateSlot]] = None,
) -> List[AugmentedQAPair]:
    """Pares de QA ordinais pelo template, rotulados pelo oráculo sobre os candidatos do hub."""
    if slots is None:
        slots = template_slots(kb)
    if not slots:
        raise GenerationError("KB sem (e_h, r_h) com dois candidatos valorados")
    rng = random.Random(seed)
    pairs = []
    for _ in range(n_pairs):
        slot = rng.choice(slots)
        question, determiner, answers = _ordinal_question(kb, slot, rng, TEMPLATE)
        pairs.append(AugmentedQAPair(
            question=question,
            topic_entity=slot.hub,
            hub_relation=slot.hub_relation,
            relation=slot.relation,
            determiner=determiner.surface,
            candidates=slot.candidates,
            answers=tuple(answers),
        ))
    logger.info(f"Aumento: {len(pairs)} pares de {len(slots)} combinações de hub")
    return pairs


def qa_label_mismatches(kb: KnowledgeBase, records: Sequence[QARecord]) -> List[str]:
    """Ids de perguntas ordinais cujas respostas diferem do oráculo."""
    mismatches = []
    for record in records:
        if not (record.ordinal and record.relation and record.hub_relation and record.determiner):
            continue
        valued = _valued(kb, record.relation)
        candidates = {
            t.tail for topic in record.topic_entities for t in kb.out_triples(topic)
            if t.relation == record.hub_relation and t.tail in valued
        }
        expected = ordinal_oracle(kb, candidates, record.relation, get_determiner(record.determiner))
        if sorted(record.answers) != expected:
            mismatches.append(record.id)
    return mismatches


def pretrain_label_mismatches(instances: Sequence[PretrainInstance]) -> List[int]:
    """Posições de instâncias QIND cujo índice não atinge o extremo do determinante."""
    return [
        position for position, instance in enumerate(instances)
        if not instance.is_consistent(get_determiner(instance.q))
    ]


def split_records(items: Sequence[Item], fractions: Sequence[float] = (0.6, 0.2, 0.2), seed: int = 0) -> List[List[Item]]:
    """Partição embaralhada e determinística; a última parte recebe o resto."""
    if not fractions or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError("frações devem ser não negativas e somar 1", fractions=list(fractions))
    order = list(items)
    random.Random(seed).shuffle(order)
    parts, start = [], 0
    for fraction in fractions[:-1]:
        size = int(len(order) * fraction + 1e-9)
        parts.append(order[start:start + size])
        start += size
    parts.append(order[start:])
    return parts
