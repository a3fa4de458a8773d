"""Intra-slot SIC detection, the collision buffer and cross-slot cancellation.

A buffered slot holds the residual of a received signal after intra-slot SIC:
the copies that could not be decoded.  When a packet is recovered anywhere,
every buffered copy of it is cancelled (retransmissions carry the same
information), which may unlock further SIC in the buffered slots.  The
cascade runs to a fixpoint.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from .channel import _prefix_of_sorted, ParameterError


class PacketId(NamedTuple):
    user: int
    sequence: int


class PacketCopy(NamedTuple):
    id: PacketId
    b: float


@dataclass
class BufferedSlot:
    slot_index: int
    copies: list[PacketCopy]

    def ids(self) -> set[PacketId]:
        return {c.id for c in self.copies}

    def has_potential(self, rho_th: float) -> bool:
        return any(c.b > rho_th for c in self.copies)


@dataclass
class CollisionBuffer:
    slots: list[BufferedSlot] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.slots)

    def copy(self) -> "CollisionBuffer":
        return CollisionBuffer([BufferedSlot(s.slot_index, list(s.copies)) for s in self.slots])

    def append(self, slot: BufferedSlot) -> None:
        if self.slots and slot.slot_index <= self.slots[-1].slot_index:
            raise ValueError(
                f"slot {slot.slot_index} does not follow buffered slot {self.slots[-1].slot_index}"
            )
        self.slots.append(slot)

    def packet_ids(self) -> set[PacketId]:
        out: set[PacketId] = set()
        for s in self.slots:
            out.update(c.id for c in s.copies)
        return out


def _sort_key(c: PacketCopy):
    # strongest first; equal SNRs resolved by ascending user index
    return (-c.b, c.id.user)


def intra_slot_detect(
    copies: Sequence[PacketCopy], rho_th: float
) -> tuple[list[PacketId], list[PacketCopy]]:
    """Run SIC on one received signal.

    Returns the ids of the recovered packets (strongest first) and the
    undecoded residual copies.
    """
    if not copies:
        return [], []
    ordered = sorted(copies, key=_sort_key)
    if ordered[-1].b < 0:
        raise ParameterError("received SNRs must be nonnegative")
    m = _prefix_of_sorted([c.b for c in ordered], rho_th)
    return [c.id for c in ordered[:m]], ordered[m:]


def cross_slot_cancel(buffer: CollisionBuffer, recovered: Iterable[PacketId]) -> CollisionBuffer:
    """Remove every buffered copy of a recovered packet; drop emptied slots."""
    recovered = set(recovered)
    if not recovered:
        return buffer.copy()
    slots = []
    for s in buffer.slots:
        kept = [c for c in s.copies if c.id not in recovered]
        if kept:
            slots.append(BufferedSlot(s.slot_index, kept))
    return CollisionBuffer(slots)


def recovery_cascade(
    buffer: CollisionBuffer,
    seed_recovered: Iterable[PacketId],
    rho_th: float,
    scan_order: Sequence[int] | None = None,
) -> tuple[set[PacketId], CollisionBuffer]:
    """Alternate cross-slot cancellation and intra-slot SIC until nothing new decodes.

    Slots are scanned in ascending ``slot_index`` unless ``scan_order`` lists
    slot indices in the order to visit them; the fixpoint does not depend on
    the order.
    """
    recovered = set(seed_recovered)
    work = cross_slot_cancel(buffer, recovered)
    rank = None if scan_order is None else {idx: r for r, idx in enumerate(scan_order)}
    while True:
        found: set[PacketId] = set()
        slots = work.slots
        if rank is not None:
            slots = sorted(slots, key=lambda s: rank.get(s.slot_index, len(rank) + s.slot_index))
        for slot in slots:
            if found:
                slot.copies = [c for c in slot.copies if c.id not in found]
            ids, residual = intra_slot_detect(slot.copies, rho_th)
            if ids:
                found.update(ids)
                slot.copies = residual
        if not found:
            break
        recovered |= found
        work = cross_slot_cancel(work, found)
    work.slots = [s for s in work.slots if s.copies]
    return recovered, work


def evict_dead_slots(buffer: CollisionBuffer, rho_th: float) -> CollisionBuffer:
    """Drop buffered slots that hold no potential copy.

    Cancellation only removes interference, so such a slot can never decode.
    """
    return CollisionBuffer(
        [BufferedSlot(s.slot_index, list(s.copies)) for s in buffer.slots if s.has_potential(rho_th)]
    )
