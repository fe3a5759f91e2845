"""Input digests embedded into emitted artifacts so downstream commands
can refuse to combine documents from different runs."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def digest_bytes(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()[:16]


def digest_file(path) -> str:
    return digest_bytes(Path(path).read_bytes())


def digest_obj(obj) -> str:
    return digest_bytes(json.dumps(obj, sort_keys=True).encode("utf-8"))
