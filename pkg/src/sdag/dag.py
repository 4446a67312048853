"""The structured DAG: storage, validity rules, milestone tree, level sets.

Every stored block keeps the closure invariant (all three references resolve
to stored blocks) and the graph stays acyclic.  Milestone-class blocks form
a tree over the idm references; the longest root-to-leaf path is the main
chain, with ties resolved by retaining the incumbent tip.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence, TextIO

from .core import (
    GENESIS,
    GENESIS_ID,
    Block,
    BlockClass,
    Params,
    block_id,
    canonical_encode,
    classify_hash,
    decode_block,
)


class ViolationKind(Enum):
    BAD_ID = "bad-id"
    BAD_POW = "bad-pow"
    MISSING_PARENT = "missing-parent"
    PEER_RULE = "peer-rule"
    TIP_RULE = "tip-rule"
    MS_RULE = "ms-rule"
    CYCLE = "cycle"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    detail: str = ""


class CycleError(ValueError):
    pass


class SDag:
    """A peer's local structured DAG.

    Single-writer, multiple-reader: call insert from one context only.
    """

    def __init__(self, params: Params):
        self.params = params
        self.genesis_id = GENESIS_ID
        self.blocks: dict[bytes, Block] = {GENESIS_ID: GENESIS}
        self.children: dict[bytes, set[bytes]] = {GENESIS_ID: set()}
        self._class: dict[bytes, BlockClass] = {}
        self._unreferenced: set[bytes] = set()
        # milestone tree
        self.ms_parent: dict[bytes, Optional[bytes]] = {GENESIS_ID: None}
        self.ms_height: dict[bytes, int] = {GENESIS_ID: 0}
        self.ms_children: dict[bytes, list[bytes]] = {GENESIS_ID: []}
        # main chain and its level-set partition
        self.main_chain: list[bytes] = [GENESIS_ID]
        self._level_of: dict[bytes, int] = {GENESIS_ID: 0}
        self._level_sets: list[list[bytes]] = [[GENESIS_ID]]

    # -- queries ---------------------------------------------------------

    def __contains__(self, bid: bytes) -> bool:
        return bid in self.blocks

    def __len__(self) -> int:
        return len(self.blocks)

    def block_class(self, bid: bytes) -> Optional[BlockClass]:
        """Hash-band class of a stored block; None for the genesis."""
        return self._class.get(bid)

    def height(self) -> int:
        return self.ms_height[self.main_chain[-1]]

    def chain_tip(self) -> bytes:
        return self.main_chain[-1]

    def _refs(self, block: Block) -> tuple[bytes, bytes, bytes]:
        return (block.idp, block.idm, block.idt)

    # -- validity --------------------------------------------------------

    def check_block(self, block: Block, bid: Optional[bytes] = None) -> Optional[Violation]:
        """Syntactic validity of `block` against this DAG; None means ok.

        Checks run in a fixed order so the reported violation is
        deterministic: pow, missing parents, peer rule, tip rule, ms rule,
        cycle.
        """
        if bid is None:
            bid = block_id(block)
        cls = classify_hash(bid, self.params)
        if cls is BlockClass.INVALID:
            return Violation(ViolationKind.BAD_POW, "hash above difficulty threshold")
        missing = [r for r in self._refs(block) if r not in self.blocks]
        if missing:
            return Violation(ViolationKind.MISSING_PARENT, missing[0].hex())
        if block.idp != self.genesis_id:
            target = self.blocks[block.idp]
            if target.peer != block.peer:
                return Violation(ViolationKind.PEER_RULE, "idp targets another miner's block")
        if block.idt != self.genesis_id:
            if self._class.get(block.idt) is not BlockClass.REGULAR:
                return Violation(ViolationKind.TIP_RULE, "idt target is not regular-class")
            if self.blocks[block.idt].peer == block.peer:
                return Violation(ViolationKind.TIP_RULE, "idt targets the same miner")
        if block.idm != self.genesis_id:
            if self._class.get(block.idm) is not BlockClass.MILESTONE:
                return Violation(ViolationKind.MS_RULE, "idm target is not milestone-class")
        if bid in self._refs(block):
            return Violation(ViolationKind.CYCLE, "block references itself")
        return None

    # -- mutation --------------------------------------------------------

    def insert(self, block: Block) -> Optional[Violation]:
        """Add a checked block; duplicate insert is a no-op.  Returns the
        violation if the block is invalid, else None."""
        bid = block_id(block)
        if bid in self.blocks:
            return None
        v = self.check_block(block, bid)
        if v is not None:
            return v
        self.blocks[bid] = block
        cls = classify_hash(bid, self.params)
        self._class[bid] = cls
        self.children[bid] = set()
        self._unreferenced.add(bid)
        for ref in set(self._refs(block)):
            self.children[ref].add(bid)
            self._unreferenced.discard(ref)
        if cls is BlockClass.MILESTONE:
            parent = block.idm
            self.ms_parent[bid] = parent
            self.ms_height[bid] = self.ms_height[parent] + 1
            self.ms_children[bid] = []
            self.ms_children[parent].append(bid)
            if self.ms_height[bid] > self.height():
                self._switch_to(bid)
        return None

    def _chain_path(self, tip: bytes) -> list[bytes]:
        path = []
        cur: Optional[bytes] = tip
        while cur is not None:
            path.append(cur)
            cur = self.ms_parent[cur]
        path.reverse()
        return path

    def _switch_to(self, tip: bytes) -> None:
        new_chain = self._chain_path(tip)
        fork = 0
        limit = min(len(new_chain), len(self.main_chain))
        while fork < limit and new_chain[fork] == self.main_chain[fork]:
            fork += 1
        for lev in self._level_sets[fork:]:
            for bid in lev:
                del self._level_of[bid]
        del self._level_sets[fork:]
        self.main_chain = new_chain
        for k in range(fork, len(new_chain)):
            self._append_level(new_chain[k], k)

    def _append_level(self, ms: bytes, index: int) -> None:
        # BFS over the references of ms, stopping at already-confirmed blocks;
        # expansion order (idp, idm, idt) keeps discovery deterministic.
        lev: list[bytes] = []
        queue = deque([ms])
        self._level_of[ms] = index
        while queue:
            bid = queue.popleft()
            lev.append(bid)
            for ref in self._refs(self.blocks[bid]):
                if ref not in self._level_of:
                    self._level_of[ref] = index
                    queue.append(ref)
        self._level_sets.append(lev)

    # -- derived sets ----------------------------------------------------

    def milestone_leaf_set(self) -> set[bytes]:
        """Milestone-tree nodes (incl. genesis) without a milestone child."""
        return {bid for bid, kids in self.ms_children.items() if not kids}

    def longest_chain(self) -> list[bytes]:
        return list(self.main_chain)

    def confirm_set(self, ms: bytes) -> set[bytes]:
        """All blocks reachable from ms along references, plus ms itself."""
        if ms not in self.blocks:
            raise KeyError(ms.hex())
        seen = {ms}
        queue = deque([ms])
        while queue:
            bid = queue.popleft()
            for ref in self._refs(self.blocks[bid]):
                # the genesis references the zero hash, which is not a block
                if ref in self.blocks and ref not in seen:
                    seen.add(ref)
                    queue.append(ref)
        return seen

    def level_index(self, ms: bytes) -> int:
        try:
            k = self.main_chain.index(ms)
        except ValueError:
            raise KeyError(f"{ms.hex()} is not on the main chain") from None
        return k

    def level_set(self, ms: bytes) -> list[bytes]:
        """Blocks confirmed by main-chain milestone ms but by none before it,
        in deterministic discovery order."""
        return list(self._level_sets[self.level_index(ms)])

    def level_sets(self) -> list[list[bytes]]:
        return [list(lev) for lev in self._level_sets]

    def pending_set(self) -> set[bytes]:
        return {bid for bid in self.blocks if bid not in self._level_of}

    def tip_set(self, miner: bytes) -> set[bytes]:
        """Unreferenced regular-class blocks of other miners; empty means the
        caller falls back to the genesis."""
        return {
            bid
            for bid in self._unreferenced
            if self._class.get(bid) is BlockClass.REGULAR and self.blocks[bid].peer != miner
        }

    # -- serialization ---------------------------------------------------

    def dump(self, fp: TextIO) -> None:
        """One hex-encoded canonical block per line, topological order."""
        for bid, block in self.blocks.items():
            if bid == GENESIS_ID:
                continue
            fp.write(canonical_encode(block).hex() + "\n")

    def dumps(self) -> str:
        import io

        buf = io.StringIO()
        self.dump(buf)
        return buf.getvalue()

    @classmethod
    def load(cls, fp: Iterable[str], params: Params) -> "SDag":
        sdag = cls(params)
        for lineno, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                block = decode_block(bytes.fromhex(line))
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
            v = sdag.insert(block)
            if v is not None:
                raise ValueError(f"line {lineno}: {v.kind.value}: {v.detail}")
        return sdag


def topological_order(blocks: Sequence[Block], sdag: Optional[SDag] = None) -> list[Block]:
    """Order blocks so every block follows everything it references within
    the set; independents break ties by block id.  References that resolve
    in `sdag` (or nowhere) are treated as satisfied."""
    by_id = {block_id(b): b for b in blocks}
    indeg: dict[bytes, int] = {bid: 0 for bid in by_id}
    dependents: dict[bytes, list[bytes]] = {bid: [] for bid in by_id}
    for bid, b in by_id.items():
        for ref in {b.idp, b.idm, b.idt}:
            if ref in by_id and ref != bid:
                indeg[bid] += 1
                dependents[ref].append(bid)
    ready = [bid for bid, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    out: list[Block] = []
    while ready:
        bid = heapq.heappop(ready)
        out.append(by_id[bid])
        for dep in dependents[bid]:
            indeg[dep] -= 1
            if indeg[dep] == 0:
                heapq.heappush(ready, dep)
    if len(out) != len(by_id):
        raise CycleError("reference cycle among blocks")
    return out
