"""
Configuração global de fixtures para testes.
"""
import pytest
import torch
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool

from app.core.config import Settings
from app.core.database import Base
from app.datagen.determiners import DETERMINERS
from app.datagen.services import CORPUS_FACTOID, CORPUS_ORDINAL, TEMPLATE
from app.encoders.services import FrozenTextEncoder
from app.encoders.vocab import build_vocabulary
from app.kb.models import KnowledgeBase, RelationKind, RelationMeta, Triple
from app.kb.normalize import normalize_value
from app.training import models  # noqa: F401  (registra as tabelas)


# Database fixture - usa SQLite em memória para testes
@pytest.fixture(scope="function")
def db_session():
    """
    Cria uma sessão de banco de dados em memória para testes.
    Cada teste recebe uma nova sessão limpa.
    """
    engine = create_engine(
        "sqlite:///:memory:",
        connect_args={"check_same_thread": False},
        poolclass=StaticPool,
    )
    Base.metadata.create_all(bind=engine)
    TestingSessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    session = TestingSessionLocal()
    try:
        yield session
    finally:
        session.close()
        Base.metadata.drop_all(bind=engine)


TOY_RELATIONS = [
    RelationMeta("music.artist.album", False),
    RelationMeta("music.album.release_date", True, RelationKind.TIME),
    RelationMeta("music.album.num_of_tracks", True, RelationKind.SIZE, "count"),
    RelationMeta("location.country.city", False),
    RelationMeta("location.city.area", True, RelationKind.SIZE, "mi2"),
    RelationMeta("tv.network.program", False),
    RelationMeta("tv.program.num_of_episodes", True, RelationKind.SIZE, "count"),
]

TOY_FACTS = [
    ("TaylorSwift", "music.artist.album", "Reputation"),
    ("TaylorSwift", "music.artist.album", "Lover"),
    ("TaylorSwift", "music.artist.album", "Folklore"),
    ("Reputation", "music.album.release_date", "2017.11.10"),
    ("Lover", "music.album.release_date", "2019.08.23"),
    ("Folklore", "music.album.release_date", "2020.07.23"),
    ("Reputation", "music.album.num_of_tracks", "15"),
    ("Lover", "music.album.num_of_tracks", "18"),
    ("Folklore", "music.album.num_of_tracks", "16"),
    ("China", "location.country.city", "Beijing"),
    ("China", "location.country.city", "Shanghai"),
    ("China", "location.country.city", "Chongqing"),
    ("Beijing", "location.city.area", "6,490 mi2"),
    ("Shanghai", "location.city.area", "2,448 mi2"),
    ("Chongqing", "location.city.area", "31,815 mi2"),
    ("HBO", "tv.network.program", "Westworld"),
    ("HBO", "tv.network.program", "Succession"),
    ("Westworld", "tv.program.num_of_episodes", "36"),
    ("Succession", "tv.program.num_of_episodes", "39"),
]


def build_toy_kb() -> KnowledgeBase:
    metas = {meta.name: meta for meta in TOY_RELATIONS}
    triples = []
    for head, relation, tail in TOY_FACTS:
        meta = metas[relation]
        triples.append(Triple(head, relation, normalize_value(tail, meta) if meta.is_numerical else tail))
    return KnowledgeBase.build(TOY_RELATIONS, triples)


@pytest.fixture
def toy_kb() -> KnowledgeBase:
    """KB com álbuns da Taylor Swift, cidades da China e programas da HBO."""
    return build_toy_kb()


@pytest.fixture
def encoder(toy_kb) -> FrozenTextEncoder:
    """Codificador congelado pequeno (d_enc=16) com o vocabulário da KB de teste."""
    texts = [TEMPLATE, CORPUS_ORDINAL, CORPUS_FACTOID, "Which album is the latest ?"]
    texts += [determiner.surface for determiner in DETERMINERS]
    return FrozenTextEncoder(build_vocabulary(toy_kb, texts), d_enc=16, seed=0)


@pytest.fixture
def small_settings(tmp_path) -> Settings:
    """Settings rápidos: larguras pequenas, poucas épocas e caminhos temporários."""
    return Settings(
        d_enc=16,
        d_h=16,
        nt_heads=2,
        nt_layers=1,
        reasoning_steps=2,
        pretrain_epochs=2,
        train_epochs=2,
        basic_epochs=2,
        classifier_epochs=5,
        pretrain_batch_size=8,
        train_batch_size=4,
        learning_rate=0.001,
        patience=2,
        n_range=(2, 6),
        qind_size=30,
        qa_size=40,
        kb_entities=60,
        data_dir=tmp_path / "data",
        checkpoint_dir=tmp_path / "checkpoints",
        output_dir=tmp_path / "runs",
        database_url=f"sqlite:///{tmp_path / 'registry.db'}",
    )


@pytest.fixture(autouse=True)
def _seeded():
    """Semente fixa para cada teste."""
    torch.manual_seed(0)
