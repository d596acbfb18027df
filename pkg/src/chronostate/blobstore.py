"""Durable storage for serialized Co-variable components.

One blob per versioned Co-variable. Blobs are addressed by a digest over
the key and the payload; every ``get`` re-verifies it, so truncated or
tampered files surface as :class:`CorruptBlob` and the caller falls back
to recomputation.
"""

from __future__ import annotations

import hashlib
import os
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .errors import CorruptBlob, StorageError, UnknownKey

CHUNK_SIZE = 4 * 1024 * 1024


@dataclass(frozen=True)
class BlobKey:
    covar: tuple[str, ...]
    t: int
    digest: str

    def __str__(self) -> str:
        return f"({{{','.join(self.covar)}}}, t{self.t})"


def _digest(covar: tuple[str, ...], t: int, payload: bytes) -> str:
    h = hashlib.blake2b(digest_size=16)
    h.update("\x1f".join(covar).encode())
    h.update(b"\x1e")
    h.update(t.to_bytes(8, "little"))
    h.update(payload)
    return h.hexdigest()


def make_key(covar: tuple[str, ...], t: int, payload: bytes) -> BlobKey:
    return BlobKey(tuple(covar), t, _digest(tuple(covar), t, payload))


class BlobStore:
    """Common put/get/poison logic; subclasses supply raw byte storage."""

    def __init__(self) -> None:
        self.stats: Counter = Counter()
        self._fail_writes = 0
        self._lock = threading.Lock()

    # raw storage hooks
    def _read(self, digest: str) -> bytes:
        raise NotImplementedError

    def _write(self, digest: str, data: bytes) -> None:
        raise NotImplementedError

    def _exists(self, digest: str) -> bool:
        raise NotImplementedError

    def _sync(self) -> None:
        pass

    def inject_write_failures(self, n: int) -> None:
        """Make the next ``n`` puts fail with StorageError."""
        self._fail_writes = n

    def _verifies(self, key: BlobKey, data: bytes) -> bool:
        return _digest(key.covar, key.t, data) == key.digest

    def put(self, key: BlobKey, payload: bytes) -> None:
        if not self._verifies(key, payload):
            raise StorageError(f"payload does not match key {key}")
        if self._fail_writes > 0:
            self._fail_writes -= 1
            raise StorageError(f"injected write failure for {key}")
        with self._lock:
            if self._exists(key.digest):
                try:
                    existing = self._read(key.digest)
                except (OSError, CorruptBlob):
                    existing = None
                if existing is not None and self._verifies(key, existing):
                    raise StorageError(f"blob {key} already stored; blobs are immutable")
                self.stats["repairs"] += 1
            try:
                self._write(key.digest, payload)
            except OSError as exc:
                raise StorageError(f"cannot write blob {key}: {exc}") from exc
        self.stats["blobs_written"] += 1
        self.stats["bytes_written"] += len(payload)

    def get(self, key: BlobKey) -> bytes:
        if not self._exists(key.digest):
            raise UnknownKey(str(key))
        try:
            data = self._read(key.digest)
        except OSError as exc:
            raise CorruptBlob(f"cannot read blob {key}: {exc}") from exc
        if not self._verifies(key, data):
            raise CorruptBlob(f"digest mismatch for blob {key}")
        self.stats["blobs_read"] += 1
        self.stats["bytes_read"] += len(data)
        return data

    def check(self, key: BlobKey) -> bool:
        """True if ``get(key)`` would succeed (reads and verifies, uncounted)."""
        if not self._exists(key.digest):
            return False
        try:
            return self._verifies(key, self._read(key.digest))
        except (OSError, CorruptBlob):
            return False

    def size(self, key: BlobKey) -> int:
        return len(self._read(key.digest)) if self._exists(key.digest) else 0

    def poison(self, key: BlobKey) -> None:
        """Corrupt a stored blob so later gets fail (test hook)."""
        if not self._exists(key.digest):
            raise UnknownKey(str(key))
        data = self._read(key.digest)
        bad = bytes([data[0] ^ 0xFF]) + data[1:] if data else b"\xff"
        with self._lock:
            self._write(key.digest, bad)

    def truncate(self, key: BlobKey, keep: int) -> None:
        """Simulate a torn write by cutting the blob to ``keep`` bytes."""
        if not self._exists(key.digest):
            raise UnknownKey(str(key))
        data = self._read(key.digest)
        with self._lock:
            self._write(key.digest, data[:keep])

    def sync(self) -> None:
        self._sync()


class MemoryBlobStore(BlobStore):
    def __init__(self) -> None:
        super().__init__()
        self._blobs: dict[str, bytes] = {}

    def _read(self, digest: str) -> bytes:
        return self._blobs[digest]

    def _write(self, digest: str, data: bytes) -> None:
        self._blobs[digest] = bytes(data)

    def _exists(self, digest: str) -> bool:
        return digest in self._blobs

    def total_bytes(self) -> int:
        return sum(len(b) for b in self._blobs.values())


class DirectoryBlobStore(BlobStore):
    """Blobs as files under ``<root>/<2-hex>/<digest>``.

    Payloads above 4 MiB are split into ``<digest>``, ``<digest>.1``, ...
    """

    def __init__(self, root: str | os.PathLike, fsync: bool = True) -> None:
        super().__init__()
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.fsync = fsync
        self._dirty: list[Path] = []

    def _path(self, digest: str, part: int = 0) -> Path:
        name = digest if part == 0 else f"{digest}.{part}"
        return self.root / digest[:2] / name

    def _exists(self, digest: str) -> bool:
        return self._path(digest).exists()

    def _read(self, digest: str) -> bytes:
        parts = []
        i = 0
        while True:
            p = self._path(digest, i)
            if not p.exists():
                break
            parts.append(p.read_bytes())
            i += 1
        return b"".join(parts)

    def _write(self, digest: str, data: bytes) -> None:
        d = self.root / digest[:2]
        d.mkdir(exist_ok=True)
        chunks = [data[i:i + CHUNK_SIZE] for i in range(0, len(data), CHUNK_SIZE)] or [b""]
        for i, chunk in enumerate(chunks):
            final = self._path(digest, i)
            tmp = final.with_name(final.name + ".tmp")
            with open(tmp, "wb") as f:
                f.write(chunk)
                if self.fsync:
                    f.flush()
                    os.fsync(f.fileno())
            os.replace(tmp, final)
        # drop stale trailing chunks from an earlier, longer write
        i = len(chunks)
        while self._path(digest, i).exists():
            self._path(digest, i).unlink()
            i += 1
        self._dirty.append(d)

    def _sync(self) -> None:
        if not self.fsync:
            self._dirty.clear()
            return
        for d in set(self._dirty):
            fd = os.open(d, os.O_RDONLY)
            try:
                os.fsync(fd)
            finally:
                os.close(fd)
        self._dirty.clear()

    def total_bytes(self) -> int:
        return sum(p.stat().st_size for p in self.root.rglob("*") if p.is_file())
