"""Shared fixtures: seeded store spaces and random profile-conformant trees."""

from __future__ import annotations

import random
import string
import time
from typing import List, Optional

import pytest

from archint.model import (
    ACCESS_POINT_KINDS,
    FIELD_KEYS,
    Concept,
    Country,
    FieldValue,
    HistoricalAgent,
    LevelOfDescription,
    Record,
    Repository,
    Vocabulary,
)
from archint.store import Store

SESSION_START = time.monotonic()

LEVELS = list(LevelOfDescription)
LANGS = ["eng", "ger", "ukr", "heb", "fre"]


def seed_store(store: Store, space: str = "staging") -> None:
    """Countries, repositories, a vocabulary and authorities used across tests."""
    with store.transaction(space) as txn:
        txn.put("countries", "us", Country("us", "United States"))
        txn.put("countries", "ua", Country("ua", "Ukraine"))
        txn.put("countries", "at", Country("at", "Austria"))
        txn.put("repositories", "us-005578", Repository("us-005578", "us", "National Memorial Archive"))
        txn.put("repositories", "ua-006557", Repository("ua-006557", "ua", "City History Archive"))
        txn.put("repositories", "at-006006", Repository("at-006006", "at", "Documentation Centre Vienna"))
        txn.put("vocabularies", "terms", Vocabulary("terms", "Subject terms"))
        txn.put("concepts", "terms-1", Concept("terms-1", "terms", (("eng", "Ghettos"),)))
        txn.put("concepts", "terms-2", Concept("terms-2", "terms", (("eng", "Camps"),), ("terms-1",)))
        txn.put("agents", "auth-1", HistoricalAgent("auth-1", "person", "Erika Muster", "pers"))


@pytest.fixture
def store() -> Store:
    s = Store()
    seed_store(s)
    return s


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xA5C11)


def rand_text(rng: random.Random, n: int = 8) -> str:
    return "".join(rng.choices(string.ascii_lowercase, k=n))


def random_tree(
    rng: random.Random,
    prefix: str = "n",
    max_depth: int = 4,
    max_fanout: int = 4,
    with_access_points: bool = True,
    _counter: Optional[List[int]] = None,
    _depth: int = 0,
    parent_ref: Optional[str] = None,
) -> Record:
    """A random Record tree in canonical profile form (round-trips through EAD)."""
    counter = _counter if _counter is not None else [0]
    counter[0] += 1
    local_id = f"{prefix}-{counter[0]:04d}"

    fields: List[FieldValue] = [FieldValue("title", f"Title {rand_text(rng)}", rng.choice(LANGS))]
    if rng.random() < 0.4:
        fields.append(FieldValue("title", f"Parallel {rand_text(rng)}", rng.choice(LANGS)))
    for key in FIELD_KEYS:
        for _ in range(rng.choice((0, 0, 0, 1, 1, 2))):
            lang = rng.choice(LANGS) if rng.random() < 0.5 else None
            fields.append(FieldValue(key, f"{key} {rand_text(rng, 12)}", lang))
    if with_access_points:
        for kind in ACCESS_POINT_KINDS:
            if rng.random() < 0.2:
                fields.append(FieldValue(f"access_point:{kind}", f"Label {rand_text(rng)}"))

    n_children = rng.randint(0, max_fanout) if _depth < max_depth else 0
    record = Record(
        local_id=local_id,
        parent_ref=parent_ref,
        level=rng.choice(LEVELS),
        language=rng.choice(LANGS) if rng.random() < 0.7 else None,
        fields=tuple(fields),
    )
    children = tuple(
        random_tree(
            rng, prefix, max_depth, max_fanout, with_access_points,
            _counter=counter, _depth=_depth + 1, parent_ref=local_id,
        )
        for _ in range(n_children)
    )
    return record.with_children(children)


def random_forest(rng: random.Random, n_roots: int, prefix: str = "n",
                  max_depth: int = 4, max_fanout: int = 4) -> List[Record]:
    counter = [0]
    return [
        random_tree(rng, prefix, max_depth, max_fanout, _counter=counter)
        for _ in range(n_roots)
    ]
