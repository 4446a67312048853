"""Outstanding-transaction buffer with distance-based assignment.

A transaction is workable for a miner only if its hash distance to the
miner's chain head falls below c*q, where q is the miner's estimated share
of total hashing power.  The closed-form collision estimates quantify how
rarely two miners can work the same transaction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .core import Transaction, tx_distance
from .dag import SDag

# wide enough that per-miner counts are ~20 at desk scale; narrower windows
# make the share estimate noisy, which visibly depresses assignment throughput
DEFAULT_POWER_WINDOW = 100


@dataclass
class PoolEntry:
    tx: Transaction
    arrived: float
    fee: int


@dataclass
class HashPowerEstimate:
    miner: bytes
    q: Fraction
    window: int


class Mempool:
    def __init__(self, capacity: Optional[int] = None):
        self.capacity = capacity
        self.entries: dict[bytes, PoolEntry] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, txid: bytes) -> bool:
        return txid in self.entries

    def add_tx(self, tx: Transaction, now: float, fee: int = 0) -> bool:
        """Add a transaction; duplicate adds are no-ops.  Returns True if
        the pool changed."""
        txid = tx.txid()
        if txid in self.entries:
            return False
        if self.capacity is not None and len(self.entries) >= self.capacity:
            return False
        self.entries[txid] = PoolEntry(tx, now, fee)
        return True

    def remove_tx(self, txid: bytes) -> Optional[PoolEntry]:
        """Remove by id; idempotent."""
        return self.entries.pop(txid, None)

    def workable(self, head_id: bytes, cq: Fraction) -> list[bytes]:
        """Transaction ids with distance <= c*q to the given head, ordered
        by fee descending, then by distance to the head.  The distance
        tie-break is head-specific, so equal-fee miners spread over
        different transactions instead of all racing for the same one.
        Empty list means the miner mines an empty block."""
        if cq <= 0:
            return []
        hits = []
        for txid, entry in self.entries.items():
            dist = tx_distance(head_id, entry.tx)
            if dist <= cq:
                hits.append((-entry.fee, dist, txid))
        hits.sort()
        return [txid for _, _, txid in hits]


def estimate_power(
    sdag: SDag, miner: bytes, window: int = DEFAULT_POWER_WINDOW
) -> HashPowerEstimate:
    """Estimate a miner's hash-power share from block counts in the last
    `window` main-chain level sets.  With no data, assume an equal split
    among observed miners (or 1 with none observed)."""
    if window < 1:
        raise ValueError("window must be >= 1")
    levels = sdag.level_sets()[1:]  # skip the genesis pseudo-level
    recent = levels[-window:]
    mine = total = 0
    peers: set[bytes] = set()
    for lev in recent:
        for bid in lev:
            peer = sdag.blocks[bid].peer
            peers.add(peer)
            total += 1
            if peer == miner:
                mine += 1
    if total == 0:
        q = Fraction(1)
    elif mine == 0:
        q = Fraction(1, max(len(peers), 1) + (0 if miner in peers else 1))
    else:
        q = Fraction(mine, total)
    return HashPowerEstimate(miner=miner, q=q, window=min(window, len(levels)) or window)


# -- collision estimates -------------------------------------------------


def no_worker_prob(c: float) -> float:
    """Large-n probability that no miner can work a given transaction."""
    if c < 0:
        raise ValueError("c must be >= 0")
    return math.exp(-c)


def one_worker_prob(c: float) -> float:
    """Large-n probability that exactly one miner can work a transaction."""
    if c < 0:
        raise ValueError("c must be >= 0")
    return c * math.exp(-c)


def collision_prob(c: float) -> float:
    """Large-n probability that a transaction is workable by two or more
    miners: 1 - e^-c - c e^-c."""
    if c < 0:
        raise ValueError("c must be >= 0")
    return 1.0 - math.exp(-c) - c * math.exp(-c)


def no_worker_prob_exact(c: float, shares: Sequence[float]) -> float:
    """Exact product form over explicit power shares."""
    prod = 1.0
    for q in shares:
        prod *= 1.0 - c * q
    return prod


def one_worker_prob_exact(c: float, shares: Sequence[float]) -> float:
    if any(c * q >= 1.0 for q in shares):
        raise ValueError("requires c < 1/max share")
    prod = no_worker_prob_exact(c, shares)
    return sum(c * q * prod / (1.0 - c * q) for q in shares)


def collision_prob_exact(c: float, shares: Sequence[float]) -> float:
    return 1.0 - no_worker_prob_exact(c, shares) - one_worker_prob_exact(c, shares)
