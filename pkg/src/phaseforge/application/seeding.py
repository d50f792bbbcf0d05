"""Seed derivation: one root seed fans out to independent, named sub-seeds.

derive_seed(root, *path) hashes "root/part/part/..." with SHA-256 and keeps the first
8 bytes (top bit cleared). The same path always gives the same seed, and distinct paths
give unrelated seeds, so every stage, fold and video can be reproduced on its own.
"""

import hashlib


def derive_seed(root: int, *path: str | int | float) -> int:
    key = "/".join([str(int(root)), *(str(p) for p in path)])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & (2**63 - 1)
