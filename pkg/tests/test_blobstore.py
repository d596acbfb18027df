from __future__ import annotations

import pytest

from chronostate.blobstore import DirectoryBlobStore, MemoryBlobStore, make_key
from chronostate.errors import CorruptBlob, StorageError, UnknownKey


@pytest.fixture(params=["memory", "directory"])
def store(request, tmp_path):
    if request.param == "memory":
        return MemoryBlobStore()
    return DirectoryBlobStore(tmp_path / "blobs", fsync=False)


def test_put_get_and_stats(store):
    k = make_key(("a",), 1, b"payload")
    store.put(k, b"payload")
    assert store.get(k) == b"payload" and store.check(k) and store.size(k) == 7
    assert store.stats["bytes_written"] == 7 and store.stats["bytes_read"] == 7


def test_key_depends_on_covariable_and_timestamp():
    assert make_key(("a",), 1, b"x") != make_key(("a",), 2, b"x") != make_key(("b",), 1, b"x")


def test_immutable_and_digest_checked(store):
    k = make_key(("a",), 1, b"one")
    store.put(k, b"one")
    with pytest.raises(StorageError):
        store.put(k, b"one")  # rewrites are forbidden
    with pytest.raises(StorageError):
        store.put(k, b"two")  # digest mismatch
    assert store.get(k) == b"one"


def test_missing_and_poisoned(store):
    k = make_key(("a",), 1, b"data")
    with pytest.raises(UnknownKey):
        store.get(k)
    assert not store.check(k)
    store.put(k, b"data")
    store.poison(k)
    assert not store.check(k)
    with pytest.raises(CorruptBlob):
        store.get(k)
    store.put(k, b"data")  # rewriting the right bytes repairs
    assert store.get(k) == b"data" and store.stats["repairs"] == 1


def test_truncate_detected(store):
    k = make_key(("a",), 1, b"abcdef")
    store.put(k, b"abcdef")
    store.truncate(k, 2)
    with pytest.raises(CorruptBlob):
        store.get(k)


def test_injected_write_failures(store):
    store.inject_write_failures(1)
    k = make_key(("a",), 1, b"x")
    with pytest.raises(StorageError):
        store.put(k, b"x")
    assert not store.check(k)
    store.put(k, b"x")
    assert store.check(k)


def test_directory_store_chunks_large_blobs(tmp_path):
    s = DirectoryBlobStore(tmp_path, fsync=False)
    data = bytes(range(256)) * (5 * 1024 * 1024 // 256)
    k = make_key(("big",), 1, data)
    s.put(k, data)
    assert s.get(k) == data
    reopened = DirectoryBlobStore(tmp_path, fsync=False)
    assert reopened.get(k) == data
