"""Deterministic fan-out of one root seed into per-stage seeds.

Every stage derives its seed by hashing its name together with the root, so
stages never share or race on a single stream and reordering stages cannot
change any of them.
"""

import hashlib


def derive_seed(root: int, name: str) -> int:
    digest = hashlib.sha256(f"{root}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
