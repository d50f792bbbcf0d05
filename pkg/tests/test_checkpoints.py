"""Tests for the checkpoint container codec and FileCheckpointRepository."""

import struct

import pytest

from phaseforge.application.layers import init_params
from phaseforge.domain import ArchSpec, ParamStore, Variant
from phaseforge.infrastructure import (
    FileCheckpointRepository,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
)
from phaseforge.infrastructure.checkpoints import checkpoint_key


def _store(small_arch: ArchSpec, variant: Variant = Variant.RSDNET) -> ParamStore:
    params = init_params(small_arch.with_variant(variant), seed=3)
    return ParamStore(
        spec=params.spec,
        params=params.params,
        seed=3,
        stage="rsdnet",
        iteration=120,
        random_init=frozenset({"fc_rsd.W", "fc_rsd.b"}),
    )


@pytest.mark.parametrize("variant", list(Variant))
def test_round_trip_is_bit_identical(small_arch: ArchSpec, variant: Variant) -> None:
    params = init_params(small_arch.with_variant(variant), seed=5)
    back = decode_checkpoint(encode_checkpoint(params))
    assert back.equals(params)
    assert back.arch_tag is variant
    assert back.seed == params.seed
    assert back.stage == params.stage
    assert back.iteration == params.iteration
    assert back.random_init == params.random_init


def test_round_trip_keeps_provenance(small_arch: ArchSpec) -> None:
    params = _store(small_arch)
    back = decode_checkpoint(encode_checkpoint(params))
    assert (back.seed, back.stage, back.iteration) == (3, "rsdnet", 120)
    assert back.random_init == {"fc_rsd.W", "fc_rsd.b"}


def test_encoding_is_deterministic(small_arch: ArchSpec) -> None:
    assert encode_checkpoint(_store(small_arch)) == encode_checkpoint(_store(small_arch))


def test_bad_magic_is_rejected(small_arch: ArchSpec) -> None:
    data = b"XXXX" + encode_checkpoint(_store(small_arch))[4:]
    with pytest.raises(ValueError, match="bad magic"):
        decode_checkpoint(data)


def test_unknown_version_is_rejected(small_arch: ArchSpec) -> None:
    data = encode_checkpoint(_store(small_arch))
    data = data[:4] + struct.pack("<H", 99) + data[6:]
    with pytest.raises(ValueError, match="Unsupported checkpoint version 99"):
        decode_checkpoint(data)


def test_truncated_data_is_rejected(small_arch: ArchSpec) -> None:
    data = encode_checkpoint(_store(small_arch))
    with pytest.raises(ValueError, match="truncated"):
        decode_checkpoint(data[:5])
    with pytest.raises(ValueError, match="truncated"):
        decode_checkpoint(data[:20])
    with pytest.raises(ValueError, match="payload too short"):
        decode_checkpoint(data[:-8])


def test_checkpoint_key_uses_stage_and_iteration(small_arch: ArchSpec) -> None:
    params = _store(small_arch)
    assert checkpoint_key(params) == "rsdnet-120"
    assert checkpoint_key(params, "best") == "best-120"


def test_file_repository_save_and_load(tmp_path, small_arch: ArchSpec) -> None:
    repo = FileCheckpointRepository(tmp_path / "checkpoints")
    params = _store(small_arch)
    key = repo.save(params)
    assert key == "rsdnet-120"
    assert repo.path_for(key).exists()
    assert not list(repo.root.glob("*.tmp"))
    assert repo.keys() == [key]
    assert repo.load(key).equals(params)
    assert load_checkpoint(repo.path_for(key)).equals(params)


def test_file_repository_lists_existing_files(tmp_path, small_arch: ArchSpec) -> None:
    FileCheckpointRepository(tmp_path).save(_store(small_arch))
    assert FileCheckpointRepository(tmp_path).keys() == ["rsdnet-120"]


def test_file_repository_missing_key(tmp_path) -> None:
    repo = FileCheckpointRepository(tmp_path)
    with pytest.raises(KeyError):
        repo.load("endon2n-1")
