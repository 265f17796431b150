import os
import threading
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Union

from sqlalchemy.engine import Engine
from sqlmodel import Session, SQLModel, create_engine, select

from scrom.models import RunRecord

DATABASE_URL_ENV = "SCROM_DATABASE_URL"

_write_lock = threading.Lock()


def database_url(output_dir: Union[str, Path]) -> str:
    """URL from SCROM_DATABASE_URL, else a SQLite file inside the output directory."""
    override = os.getenv(DATABASE_URL_ENV)
    if override:
        return override
    return f"sqlite:///{Path(output_dir) / 'runs.db'}"


@lru_cache(maxsize=None)
def get_engine(url: str) -> Engine:
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, echo=False, connect_args=connect_args)


def create_db_and_tables(engine: Engine) -> None:
    """Create database and tables."""
    SQLModel.metadata.create_all(engine)


def record_run(engine: Engine, record: RunRecord) -> RunRecord:
    with _write_lock:
        with Session(engine) as session:
            session.add(record)
            session.commit()
            session.refresh(record)
    return record


def list_runs(engine: Engine, scenario: Optional[str] = None) -> List[RunRecord]:
    with Session(engine) as session:
        statement = select(RunRecord).order_by(RunRecord.id)
        if scenario is not None:
            statement = statement.where(RunRecord.scenario == scenario)
        return list(session.exec(statement).all())
