"""Two-party rendezvous over a small memory-mapped file.

The file holds six 64-bit slots: per party an arrival count, a "detached"
flag and, once it is done measuring but still taking part, its measured
iteration count plus one. Every slot has a single writer (its own
party), so plain aligned stores are enough and no atomic read-modify-write
is needed. A party waiting for its ``k``-th rendezvous is released once the
partner's arrival count reaches ``k`` or the partner has detached.
"""
from __future__ import annotations

import mmap
import os
import struct
import tempfile
import time
import uuid

_SLOT = struct.Struct("<q")
_SIZE = 6 * _SLOT.size


class BarrierTimeout(RuntimeError):
    pass


def _shm_dir() -> str:
    return "/dev/shm" if os.path.isdir("/dev/shm") and os.access("/dev/shm", os.W_OK) else tempfile.gettempdir()


class Barrier:
    """One party's handle on a named two-party barrier.

    The identifier is a file path, so any process that knows it can attach.
    """

    def __init__(self, path: str, party: int, *, owner: bool = False,
                 spin_seconds: float = 200e-6, poll_seconds: float = 20e-6):
        if party not in (0, 1):
            raise ValueError("party must be 0 or 1")
        self.path = path
        self.party = party
        self.owner = owner
        self.spin_seconds = spin_seconds
        self.poll_seconds = poll_seconds
        self._fd = os.open(path, os.O_RDWR)
        self._map = mmap.mmap(self._fd, _SIZE)
        self._arrivals = self._read(party)

    @classmethod
    def create(cls, directory: str | None = None) -> "Barrier":
        path = os.path.join(directory or _shm_dir(), f"duet-barrier-{uuid.uuid4().hex}")
        fd = os.open(path, os.O_RDWR | os.O_CREAT | os.O_EXCL, 0o600)
        try:
            os.write(fd, b"\0" * _SIZE)
        finally:
            os.close(fd)
        return cls(path, 0, owner=True)

    @classmethod
    def attach(cls, path: str, party: int, **kwargs) -> "Barrier":
        return cls(path, party, **kwargs)

    def _read(self, slot: int) -> int:
        return _SLOT.unpack_from(self._map, slot * _SLOT.size)[0]

    def _write(self, slot: int, value: int):
        _SLOT.pack_into(self._map, slot * _SLOT.size, value)

    @property
    def partner(self) -> int:
        return 1 - self.party

    def partner_detached(self) -> bool:
        return self._read(2 + self.partner) != 0

    def detached(self, party: int) -> bool:
        return self._read(2 + party) != 0

    def measured(self, party: int) -> int | None:
        """Measured iterations a finished party completed, ``None`` while it is measuring."""
        v = self._read(4 + party)
        return v - 1 if v else None

    def finish(self, measured: int) -> None:
        """Announce the end of measured iterations while staying in the barrier."""
        self._write(4 + self.party, measured + 1)

    def arrivals(self, party: int) -> int:
        return self._read(party)

    def wait(self, timeout: float | None = None) -> None:
        """Block until the partner arrives at the same rendezvous (or has detached)."""
        self._arrivals += 1
        self._write(self.party, self._arrivals)
        target = self._arrivals
        other = self.partner
        t0 = time.monotonic()
        spin_until = t0 + self.spin_seconds
        while True:
            if self._read(other) >= target or self._read(2 + other):
                return
            now = time.monotonic()
            if timeout is not None and now - t0 > timeout:
                raise BarrierTimeout(
                    f"party {self.party} waited {now - t0:.1f} s at rendezvous {target} "
                    f"(partner at {self._read(other)})"
                )
            if now > spin_until:
                time.sleep(self.poll_seconds)

    def detach(self, party: int | None = None) -> None:
        """Stop taking part: the partner's current and future waits return at once."""
        self._write(2 + (self.party if party is None else party), 1)

    def close(self) -> None:
        if self._map is not None:
            self._map.close()
            os.close(self._fd)
            self._map = None

    def unlink(self) -> None:
        try:
            os.unlink(self.path)
        except FileNotFoundError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        if self.owner:
            self.unlink()
