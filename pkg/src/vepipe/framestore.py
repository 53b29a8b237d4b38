"""Batched frame storage without duplicated boundary frames.

Consecutive runs of an extra-frame network overlap by one frame: the
lookahead of lane ``j`` is the first frame of lane ``j + 1``. A naive batch
of ``b`` runs stores ``b * (n + 1)`` items; the shared layout stores the
``b * n + 1`` distinct ones while keeping every input slot's lanes contiguous,
so each slot is a zero-copy ``[b, ...]`` view for the backend.

Region ``r`` of the shared store starts at ``r * n * b``; for ``n = 3``,
``b = 2`` region 0 holds frames ``0 3 6 1 4 2 5`` at offsets 0-6:

    slot 0 (lanes 0,1)  -> offsets 0,1   frames 0,3
    slot 3 (lookahead)  -> offsets 1,2   frames 3,6
    slot 1              -> offsets 3,4   frames 1,4
    slot 2              -> offsets 5,6   frames 2,5

Neighbouring regions overlap by one slot. When a region's batch is done, its
last frame (offset ``base + b``) is copied to the next region's first slot,
which is the only item the two batches have in common.
"""

from dataclasses import dataclass

import numpy as np

from vepipe.errors import CapacityError, LayoutError

SHARED = "shared"
PLAIN = "plain"


@dataclass(frozen=True)
class StoreLayout:
    n: int
    b: int
    regions: int = 2
    extra_frame: bool = True

    def __post_init__(self):
        if self.n < 1 or self.b < 1:
            raise LayoutError(f"n and b must be positive, got n={self.n}, b={self.b}")
        if self.regions < 2:
            raise LayoutError(f"need at least 2 regions, got {self.regions}")

    @property
    def input_count(self):
        return self.n + (1 if self.extra_frame else 0)

    @property
    def shared_slots(self):
        return self.regions * self.n * self.b + 1

    @property
    def plain_slots(self):
        return self.regions * self.b * self.input_count

    def base(self, r):
        return (r % self.regions) * self.n * self.b


@dataclass(frozen=True)
class CopyInstruction:
    src: int
    dst: int


def shared_slot_offset(k, j, r, layout):
    """Store offset of input slot ``k`` (0..n), lane ``j`` in region ``r``."""
    n, b = layout.n, layout.b
    if not layout.extra_frame:
        raise LayoutError("shared layout needs an extra-frame network")
    if not 0 <= k <= n or not 0 <= j < b:
        raise LayoutError(f"slot {k} lane {j} outside n={n}, b={b}")
    base = layout.base(r)
    if k == 0:
        return base + j
    if k == n:
        return base + 1 + j
    return base + 1 + b + (k - 1) * b + j


def shared_slot_frame(k, j, f0, n):
    """Frame held by slot ``k`` lane ``j`` of a shared region starting at ``f0``."""
    return f0 + j * n + k


def shared_region_map(batch, r, layout):
    """``(frame, offset)`` for every distinct item of a shared batch, in offset order."""
    if not batch.shared:
        raise LayoutError("batch is not stride-aligned; use the plain layout")
    f0 = batch.first_frame
    seen = {}
    for j, run in enumerate(batch.lanes):
        for k, frame in enumerate(run.inputs):
            off = shared_slot_offset(k, j, r, layout)
            if frame != shared_slot_frame(k, j, f0, layout.n):
                raise LayoutError(
                    f"lane {j} slot {k} holds frame {frame}, not stride-aligned")
            seen[off] = frame
    return [(f, o) for o, f in sorted(seen.items())]


def advance_region(r, layout):
    """Copy that hands region ``r``'s last frame to the next region's first slot.

    For ``n == 1`` source and destination coincide and the copy is a no-op.
    """
    return CopyInstruction(src=layout.base(r) + layout.b, dst=layout.base(r + 1))


def place_plain(run, j, b, capacity, region=0):
    """Plain layout placement of one run in lane ``j``: slot ``k`` at ``k * b + j``.

    Duplicate frame references get separate slots (real copies).
    """
    ic = len(run.inputs)
    base = region * b * ic
    if not 0 <= j < b:
        raise LayoutError(f"lane {j} outside batch of {b}")
    if base + ic * b > capacity:
        raise CapacityError(
            f"plain region {region} needs {base + ic * b} slots, store has {capacity}")
    return [(frame, base + k * b + j) for k, frame in enumerate(run.inputs)]


def memory_footprint(layout, mode):
    """Distinct items one batch occupies: ``n*b + 1`` shared, ``b*(n+1)`` plain."""
    if mode == SHARED:
        return layout.n * layout.b + 1
    if mode == PLAIN:
        return layout.b * layout.input_count
    raise ValueError(f"unknown mode {mode!r}")


class FrameStore:
    """Slot-addressed storage for items made of one or more arrays.

    An item is a tuple of arrays (a frame's planes, or a flattened feature
    pyramid). Component ``c`` of every item lives in one contiguous array of
    shape ``[slots, *shape_c]``, allocated from the first item written.
    """

    def __init__(self, slots):
        self.slots = slots
        self.arrays = None
        self.frame_at = [None] * slots
        self.writes = 0
        self.copies = 0

    def _allocate(self, item):
        self.arrays = tuple(np.empty((self.slots,) + a.shape, dtype=a.dtype) for a in item)

    def write(self, offset, item, frame=None):
        if not 0 <= offset < self.slots:
            raise CapacityError(f"offset {offset} outside store of {self.slots} slots")
        if self.arrays is None:
            self._allocate(item)
        if len(item) != len(self.arrays):
            raise LayoutError(f"item has {len(item)} components, store has {len(self.arrays)}")
        for dst, a in zip(self.arrays, item):
            dst[offset] = a
        self.frame_at[offset] = frame
        self.writes += 1

    def copy(self, instr):
        for a in self.arrays:
            a[instr.dst] = a[instr.src]
        self.frame_at[instr.dst] = self.frame_at[instr.src]
        self.copies += 1

    def view(self, start, count):
        """Zero-copy ``[count, ...]`` views of each component at ``start``."""
        if start < 0 or start + count > self.slots:
            raise CapacityError(f"view [{start}, {start + count}) outside store")
        return tuple(a[start:start + count] for a in self.arrays)
