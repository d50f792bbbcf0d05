"""Checkpoint container codec and file-backed CheckpointRepository.

Layout (little-endian):

    magic    4 bytes  b"PFCK"
    version  uint16   FORMAT_VERSION
    hlen     uint32   byte length of the JSON header
    header   hlen     UTF-8 JSON, keys sorted: arch_tag, spec, seed, stage,
                      iteration, random_init, tensors[{name, shape, offset, count}]
    payload  rest     float64 values of every tensor, row-major, concatenated in
                      header order; offset and count are in values, not bytes
"""

import json
import logging
import struct
import threading
from pathlib import Path

import numpy as np

from phaseforge.domain import ArchSpec, ParamStore

logger = logging.getLogger(__name__)

MAGIC = b"PFCK"
FORMAT_VERSION = 1
CHECKPOINT_SUFFIX = ".ckpt"
_PREFIX = struct.Struct("<4sHI")
_FLOAT = np.dtype("<f8")


def checkpoint_key(params: ParamStore, stage: str | None = None) -> str:
    return f"{stage or params.stage}-{params.iteration}"


def encode_checkpoint(params: ParamStore) -> bytes:
    tensors, chunks, offset = [], [], 0
    for name in params.spec.parameter_shapes():
        array = np.ascontiguousarray(params[name], dtype=_FLOAT)
        tensors.append(
            {"name": name, "shape": list(array.shape), "offset": offset, "count": array.size}
        )
        chunks.append(array.tobytes(order="C"))
        offset += array.size
    header = {
        "arch_tag": params.arch_tag.value,
        "spec": params.spec.to_dict(),
        "seed": params.seed,
        "stage": params.stage,
        "iteration": params.iteration,
        "random_init": sorted(params.random_init),
        "tensors": tensors,
    }
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(raw)) + raw + b"".join(chunks)


def decode_checkpoint(data: bytes) -> ParamStore:
    if len(data) < _PREFIX.size:
        raise ValueError("Checkpoint is truncated: no header.")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"Not a checkpoint: bad magic {magic!r}.")
    if version != FORMAT_VERSION:
        raise ValueError(f"Unsupported checkpoint version {version}.")
    start = _PREFIX.size + hlen
    if len(data) < start:
        raise ValueError("Checkpoint is truncated: header incomplete.")
    header = json.loads(data[_PREFIX.size : start].decode("utf-8"))
    payload = np.frombuffer(data, dtype=_FLOAT, offset=start)
    spec = ArchSpec.from_dict(header["spec"])
    if spec.variant.value != header["arch_tag"]:
        raise ValueError(
            f"Checkpoint arch_tag {header['arch_tag']!r} contradicts spec "
            f"variant {spec.variant.value!r}."
        )
    params = {}
    for tensor in header["tensors"]:
        end = tensor["offset"] + tensor["count"]
        if end > payload.size:
            raise ValueError(f"Checkpoint payload too short for {tensor['name']}.")
        values = payload[tensor["offset"] : end]
        params[tensor["name"]] = values.reshape(tensor["shape"]).astype(np.float64)
    return ParamStore(
        spec=spec,
        params=params,
        seed=int(header["seed"]),
        stage=header["stage"],
        iteration=int(header["iteration"]),
        random_init=frozenset(header["random_init"]),
    )


def load_checkpoint(path: Path) -> ParamStore:
    return decode_checkpoint(Path(path).read_bytes())


class FileCheckpointRepository:
    """Stores one '<stage>-<iteration>.ckpt' file per checkpoint under ``root``."""

    def __init__(self, root: Path) -> None:
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._keys = sorted(p.name[: -len(CHECKPOINT_SUFFIX)] for p in self._root.glob(f"*{CHECKPOINT_SUFFIX}"))

    @property
    def root(self) -> Path:
        return self._root

    def path_for(self, key: str) -> Path:
        return self._root / f"{key}{CHECKPOINT_SUFFIX}"

    def save(self, params: ParamStore, stage: str | None = None) -> str:
        key = checkpoint_key(params, stage)
        path = self.path_for(key)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(encode_checkpoint(params))
        tmp.replace(path)
        with self._lock:
            if key not in self._keys:
                self._keys.append(key)
        logger.debug("Saved checkpoint %s", path)
        return key

    def load(self, key: str) -> ParamStore:
        path = self.path_for(key)
        if not path.exists():
            raise KeyError(key)
        return load_checkpoint(path)

    def keys(self) -> list[str]:
        with self._lock:
            return list(self._keys)
