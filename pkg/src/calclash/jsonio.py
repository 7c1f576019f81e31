"""Canonical JSON serialization, content digests and seeded sub-streams.

Every file the engine writes goes through ``dump_canonical`` so that identical
inputs produce byte-identical files (sorted keys, fixed separators, trailing
newline).  All randomness is derived from one root seed via named sub-streams.
"""

from __future__ import annotations

import hashlib
import json
import random
from pathlib import Path
from typing import Any


def canonical_text(obj: Any) -> str:
    """Render ``obj`` as deterministic JSON text."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def dump_canonical(obj: Any, path: str | Path) -> str:
    """Write canonical JSON to ``path`` and return its sha256 digest."""
    text = canonical_text(obj)
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")
    return sha256_text(text)


def load_json(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def digest_of(obj: Any) -> str:
    """Digest of the canonical JSON rendering of ``obj``."""
    return sha256_text(canonical_text(obj))


def substream(seed: int, *names: str) -> random.Random:
    """Derive an independent, reproducible RNG from a root seed and a name path.

    Distinct name paths give statistically independent streams, so components
    (org, calendar, conflicts, agent) can be regenerated in isolation.
    """
    key = f"{seed}/" + "/".join(names)
    h = hashlib.sha256(key.encode("utf-8")).digest()
    return random.Random(int.from_bytes(h[:8], "big"))
