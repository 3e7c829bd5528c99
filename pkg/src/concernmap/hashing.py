"""Canonical serialization and digest helpers shared across the toolkit."""

from __future__ import annotations

import hashlib
import json
from typing import Any


def canonical_json(obj: Any) -> str:
    """Serialize to a canonical JSON string (sorted keys, fixed separators).

    Floats round-trip exactly through json (repr-based), so equal values
    always produce equal strings.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_json_bytes(obj: Any) -> bytes:
    return canonical_json(obj).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_of(obj: Any) -> str:
    """Hex digest of an object's canonical JSON form."""
    return sha256_hex(canonical_json_bytes(obj))
