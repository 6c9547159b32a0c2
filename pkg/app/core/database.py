from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, sessionmaker, declarative_base
from .config import settings

engine = create_engine(settings.database_url)
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
Base = declarative_base()


def init_db(bind: Optional[Engine] = None) -> Engine:
    """Cria as tabelas do registro de execuções (e o diretório do SQLite)."""
    bind = bind or engine
    url = bind.url
    if url.get_backend_name() == "sqlite" and url.database not in (None, "", ":memory:"):
        Path(url.database).parent.mkdir(parents=True, exist_ok=True)
    # Importar os modelos para registrar as tabelas no metadata
    from app.training import models  # noqa: F401
    Base.metadata.create_all(bind=bind)
    return bind


@contextmanager
def get_db(database_url: Optional[str] = None) -> Iterator[Session]:
    """Sessão do registro; usa o banco padrão ou a URL informada pela CLI."""
    if database_url is None or database_url == settings.database_url:
        bind = init_db(engine)
        factory = SessionLocal
    else:
        bind = init_db(create_engine(database_url))
        factory = sessionmaker(autocommit=False, autoflush=False, bind=bind)
    db = factory()
    try:
        yield db
    finally:
        db.close()
