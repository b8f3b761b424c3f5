"""Core value types and page arithmetic shared by every module."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError

DEFAULT_PAGE_SIZE = 4096
UNMAPPED = -1


class Op(enum.IntEnum):
    LOAD = 0
    STORE = 1


class Level(enum.IntEnum):
    L1 = 0
    L2 = 1
    L3 = 2
    LFB = 3
    DRAM = 4
    NVM = 5
    UNKNOWN = 6

    @property
    def is_external(self) -> bool:
        return self in (Level.DRAM, Level.NVM)


class Tlb(enum.IntEnum):
    HIT = 0
    MISS = 1
    UNKNOWN = 2


class Tier(enum.IntEnum):
    DRAM = 0
    NVM = 1

    @property
    def level(self) -> Level:
        return Level.DRAM if self is Tier.DRAM else Level.NVM


def tier_of_level(level: Level) -> Tier | None:
    if level == Level.DRAM:
        return Tier.DRAM
    if level == Level.NVM:
        return Tier.NVM
    return None


class AllocKind(enum.IntEnum):
    MMAP = 0
    MUNMAP = 1


class MemorySample(NamedTuple):
    timestamp: int
    thread_id: int
    addr: int
    op: Op
    level: Level
    latency: int
    tlb: Tlb

    @property
    def is_external(self) -> bool:
        return self.level in (Level.DRAM, Level.NVM)


class AllocationEvent(NamedTuple):
    timestamp: int
    kind: AllocKind
    base: int
    length: int
    callstack_id: str


class ObjectRecord(NamedTuple):
    object_id: int
    base: int
    length: int
    t_start: int
    t_end: int
    callstack_id: str

    @property
    def end(self) -> int:
        return self.base + self.length

    def contains(self, addr: int, t: int) -> bool:
        return self.base <= addr < self.base + self.length and self.t_start <= t < self.t_end


def check_page_size(page_size: int) -> int:
    if page_size <= 0 or page_size & (page_size - 1):
        raise ConfigError(f"page_size must be a power of two, got {page_size}", ["page_size"])
    return page_size


def page_of(addr: int, page_size: int = DEFAULT_PAGE_SIZE) -> int:
    check_page_size(page_size)
    return addr // page_size


def align_down(addr: int, page_size: int) -> int:
    return addr - addr % page_size


def align_up(n: int, page_size: int) -> int:
    return -(-n // page_size) * page_size


@dataclass(frozen=True)
class SampleColumns:
    """Columnar view of a sample sequence, for vectorised metrics."""

    timestamp: np.ndarray
    thread_id: np.ndarray
    addr: np.ndarray
    op: np.ndarray
    level: np.ndarray
    latency: np.ndarray
    tlb: np.ndarray

    def __len__(self) -> int:
        return len(self.timestamp)

    @classmethod
    def from_samples(cls, samples: Sequence[MemorySample]) -> "SampleColumns":
        if isinstance(samples, SampleColumns):
            return samples
        n = len(samples)
        if n == 0:
            empty = np.zeros(0, dtype=np.int64)
            return cls(empty, empty, np.zeros(0, dtype=np.uint64), empty, empty, empty, empty)
        ts, tid, addr, op, level, lat, tlb = zip(*samples)
        return cls(
            timestamp=np.array(ts, dtype=np.int64),
            thread_id=np.array(tid, dtype=np.int64),
            addr=np.array(addr, dtype=np.uint64),
            op=np.array(op, dtype=np.int8),
            level=np.array(level, dtype=np.int8),
            latency=np.array(lat, dtype=np.int64),
            tlb=np.array(tlb, dtype=np.int8),
        )

    def to_samples(self) -> list[MemorySample]:
        ops, levels, tlbs = list(Op), list(Level), list(Tlb)
        return [
            MemorySample(t, th, a, ops[o], levels[lv], la, tlbs[tb])
            for t, th, a, o, lv, la, tb in zip(
                self.timestamp.tolist(), self.thread_id.tolist(), self.addr.tolist(), self.op.tolist(),
                self.level.tolist(), self.latency.tolist(), self.tlb.tolist(),
            )
        ]

    def external_mask(self, include_stores: bool = False) -> np.ndarray:
        mask = (self.level == Level.DRAM) | (self.level == Level.NVM)
        if not include_stores:
            mask &= self.op == Op.LOAD
        return mask

    def pages(self, page_size: int) -> np.ndarray:
        shift = check_page_size(page_size).bit_length() - 1
        return (self.addr >> np.uint64(shift)).astype(np.int64)
