"""Per-peer protocol state machine: receiving and creating blocks.

Receiving: solidify (buffer blocks with unknown ancestors and ask for
them), validate, insert, relay once, drop the contained transaction from
the mempool, and switch the main chain when a higher milestone shows up.
Transaction semantics are deliberately NOT checked on receive; conflicts
are resolved when the DAG is folded into a ledger.

Creating: reference the chain tip, the miner's own head, and a random tip
of another peer; pick the best workable transaction that is compatible
with the ledger at the current tip; mine; publish.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

from .core import (
    GENESIS_ID,
    Block,
    MiningExhausted,
    Params,
    Transaction,
    TxKind,
    block_id,
    mine,
)
from .dag import SDag, topological_order
from .ledger import Ledger, OrderedBlock, build_ledger, dfs_order, genesis_outpoint
from .mempool import Mempool, estimate_power
from .sigs import DEFAULT_SCHEME, SignatureScheme

DEFAULT_ORPHAN_CAP = 10_000
DEFAULT_CATCHUP_THRESHOLD = 5
DEFAULT_MINE_BUDGET = 1 << 20


@dataclass(frozen=True)
class Relay:
    block: Block


@dataclass(frozen=True)
class Publish:
    block: Block


@dataclass(frozen=True)
class RequestMissing:
    ids: tuple[bytes, ...]


@dataclass(frozen=True)
class RequestLevels:
    start_height: int
    end_height: int


Action = Union[Relay, Publish, RequestMissing, RequestLevels]


class NodeState:
    """One peer's complete local state; confine each instance to a single
    logical execution context."""

    def __init__(
        self,
        params: Params,
        secret: bytes,
        seed: int = 0,
        genesis_outputs: Sequence[tuple[int, bytes]] = (),
        scheme: SignatureScheme = DEFAULT_SCHEME,
        orphan_cap: int = DEFAULT_ORPHAN_CAP,
    ):
        self.params = params
        self.scheme = scheme
        self.secret = secret
        self.public = scheme.derive_public(secret)
        self.identity = scheme.address(self.public)
        self.sdag = SDag(params)
        self.mempool = Mempool()
        self.my_head = GENESIS_ID
        self.genesis_outputs = tuple(genesis_outputs)
        self.rng = random.Random(seed)
        self.orphan_blocks: dict[bytes, Block] = {}
        self.orphans_by_missing: dict[bytes, set[bytes]] = {}
        self.orphan_cap = orphan_cap
        self._requested: set[bytes] = set()
        self._relayed: set[bytes] = set()
        self.mining_attempts = 0
        self.rejected_blocks = 0
        # incremental ledger cache at the main-chain tip
        self._cache_chain: list[bytes] = [GENESIS_ID]
        self._cache = self._fresh_ledger()
        self._q_cache: Optional[tuple[bytes, Fraction]] = None

    # -- ledger cache ----------------------------------------------------

    def _fresh_ledger(self) -> Ledger:
        ledger = Ledger()
        for i, (value, address) in enumerate(self.genesis_outputs):
            ledger.utxo[genesis_outpoint(i)] = (value, address)
        return ledger

    def _apply_level(self, ledger: Ledger, k: int) -> None:
        ms = self.sdag.main_chain[k]
        items = []
        for bid in dfs_order(self.sdag, ms):
            tx = self.sdag.blocks[bid].mes
            if tx.kind is not TxKind.EMPTY:
                items.append((tx, OrderedBlock(bid, k)))
        build_ledger(items, scheme=self.scheme, into=ledger)

    def _refresh_ledger_cache(self) -> None:
        chain = self.sdag.main_chain
        prefix = 0
        limit = min(len(chain), len(self._cache_chain))
        while prefix < limit and chain[prefix] == self._cache_chain[prefix]:
            prefix += 1
        if prefix < len(self._cache_chain):
            # chain switch: rebuild from scratch (switches are rare)
            self._cache = self._fresh_ledger()
            prefix = 1
        for k in range(max(prefix, 1), len(chain)):
            self._apply_level(self._cache, k)
        self._cache_chain = list(chain)

    @property
    def ledger_cache(self) -> Ledger:
        if self._cache_chain != self.sdag.main_chain:
            self._refresh_ledger_cache()
        return self._cache

    def tx_compatible(self, tx: Transaction) -> bool:
        """Inputs unspent in the ledger at the current tip, and not a
        transaction that ledger already contains."""
        cache = self.ledger_cache
        if tx.txid() in cache.accepted_ids:
            return False
        if tx.kind is TxKind.NORMAL:
            seen = set()
            for inp in tx.inputs:
                op = (inp.txid, inp.index)
                if op in seen or op not in cache.utxo:
                    return False
                seen.add(op)
        return True

    # -- receive path ----------------------------------------------------

    def on_receive_block(self, block: Block, now: float = 0.0) -> list[Action]:
        actions: list[Action] = []
        self._receive_one(block, actions)
        return actions

    def _receive_one(self, block: Block, actions: list[Action]) -> None:
        bid = block_id(block)
        if bid in self.sdag or bid in self.orphan_blocks:
            return
        missing = sorted(
            {r for r in (block.idp, block.idm, block.idt) if r not in self.sdag.blocks}
        )
        if missing:
            self._buffer_orphan(bid, block, missing, actions)
            return
        if self._try_insert(bid, block, actions):
            self._drain_orphans(bid, actions)

    def _buffer_orphan(
        self, bid: bytes, block: Block, missing: list[bytes], actions: list[Action]
    ) -> None:
        if len(self.orphan_blocks) >= self.orphan_cap:
            # FIFO eviction bounds memory under junk floods
            victim = next(iter(self.orphan_blocks))
            self._forget_orphan(victim)
        self.orphan_blocks[bid] = block
        for mid in missing:
            self.orphans_by_missing.setdefault(mid, set()).add(bid)
        want = tuple(m for m in missing if m not in self._requested and m not in self.orphan_blocks)
        if want:
            self._requested.update(want)
            actions.append(RequestMissing(want))

    def _forget_orphan(self, bid: bytes) -> None:
        self.orphan_blocks.pop(bid, None)
        for waiting in self.orphans_by_missing.values():
            waiting.discard(bid)

    def _try_insert(self, bid: bytes, block: Block, actions: list[Action]) -> bool:
        violation = self.sdag.insert(block)
        if violation is not None:
            self.rejected_blocks += 1
            return False
        if bid not in self._relayed:
            self._relayed.add(bid)
            actions.append(Relay(block))
        if block.mes.kind is not TxKind.EMPTY:
            self.mempool.remove_tx(block.mes.txid())
        return True

    def _drain_orphans(self, arrived: bytes, actions: list[Action]) -> None:
        queue = [arrived]
        while queue:
            ready_parent = queue.pop()
            waiting = self.orphans_by_missing.pop(ready_parent, None)
            if not waiting:
                continue
            for bid in sorted(waiting):
                block = self.orphan_blocks.get(bid)
                if block is None:
                    continue
                refs = (block.idp, block.idm, block.idt)
                if any(r not in self.sdag.blocks for r in refs):
                    continue
                del self.orphan_blocks[bid]
                if self._try_insert(bid, block, actions):
                    queue.append(bid)

    def on_tx(self, tx: Transaction, now: float = 0.0, fee: int = 0) -> None:
        self.mempool.add_tx(tx, now, fee)

    def on_level_set_batch(self, blocks: Sequence[Block], now: float = 0.0) -> list[Action]:
        actions: list[Action] = []
        for block in topological_order(blocks, self.sdag):
            self._receive_one(block, actions)
        return actions

    def sync_catchup(
        self, remote_height: int, threshold: int = DEFAULT_CATCHUP_THRESHOLD
    ) -> list[Action]:
        local = self.sdag.height()
        if remote_height - local > threshold:
            return [RequestLevels(local + 1, remote_height)]
        return []

    # -- create path -----------------------------------------------------

    def _estimated_q(self) -> Fraction:
        tip = self.sdag.chain_tip()
        if self._q_cache is not None and self._q_cache[0] == tip:
            return self._q_cache[1]
        q = estimate_power(self.sdag, self.identity).q
        self._q_cache = (tip, q)
        return q

    def _pick_tx(self) -> Transaction:
        if self.my_head == GENESIS_ID:
            # a miner's first block opens its reward chain
            return Transaction(
                TxKind.REGISTRATION, next_address=self.scheme.address(self.public)
            )
        cq = self.params.c * self._estimated_q()
        for txid in self.mempool.workable(self.my_head, cq):
            tx = self.mempool.entries[txid].tx
            if self.tx_compatible(tx):
                return tx
        return Transaction(TxKind.EMPTY)

    def create_block(self, now: float = 0.0, max_attempts: int = DEFAULT_MINE_BUDGET) -> Block:
        """Build, mine, and locally adopt a new block; caller broadcasts it."""
        for _ in range(8):
            tips = sorted(self.sdag.tip_set(self.identity))
            idt = self.rng.choice(tips) if tips else GENESIS_ID
            template = Block(
                idp=self.my_head,
                idm=self.sdag.chain_tip(),
                idt=idt,
                peer=self.identity,
                pow=0,
                mes=self._pick_tx(),
            )
            try:
                result = mine(
                    template,
                    self.params,
                    max_attempts,
                    start_nonce=self.rng.getrandbits(64),
                )
            except MiningExhausted as exc:
                self.mining_attempts += exc.attempts
                continue
            self.mining_attempts += result.attempts
            block = result.block
            bid = block_id(block)
            violation = self.sdag.insert(block)
            assert violation is None, f"self-created block invalid: {violation}"
            self._relayed.add(bid)
            self.my_head = bid
            if block.mes.kind is not TxKind.EMPTY:
                self.mempool.remove_tx(block.mes.txid())
            return block
        raise MiningExhausted(max_attempts * 8)
