"""Shared helpers for structural tests: random DAG generation and a
brute-force reference for the confirm relation."""

import random
from fractions import Fraction

from sdag.core import (
    EMPTY_TX,
    GENESIS_ID,
    Block,
    BlockClass,
    Params,
    block_id,
    sha256,
)
from sdag.dag import SDag

# d = 1 makes every nonce valid, so random DAGs cost one hash per block
RANDOM_PARAMS = Params(d=Fraction(1), p=Fraction(1, 3), c=Fraction(1, 10), r_n=1, r_m=2)


def random_dag(rng: random.Random, n_blocks: int = 50, n_miners: int = 5, params: Params = RANDOM_PARAMS) -> SDag:
    """Grow a valid random DAG one block at a time.

    Each block extends its miner's own head, references a random known
    milestone (or genesis) and a random regular block of another miner (or
    genesis); the milestone/regular class emerges from the real hash.
    """
    sdag = SDag(params)
    miners = [sha256(b"rand-miner-%d" % i) for i in range(n_miners)]
    heads = {m: GENESIS_ID for m in miners}
    milestones = [GENESIS_ID]
    regular_by_miner = {m: [] for m in miners}
    for k in range(n_blocks):
        miner = rng.choice(miners)
        idm = rng.choice(milestones)
        others = [
            bid
            for m, blocks in regular_by_miner.items()
            if m != miner
            for bid in blocks
        ]
        idt = rng.choice(others) if others and rng.random() < 0.8 else GENESIS_ID
        block = Block(heads[miner], idm, idt, miner, rng.getrandbits(64), EMPTY_TX)
        violation = sdag.insert(block)
        assert violation is None, violation
        bid = block_id(block)
        heads[miner] = bid
        if sdag.block_class(bid) is BlockClass.MILESTONE:
            milestones.append(bid)
        else:
            regular_by_miner[miner].append(bid)
    return sdag


def brute_force_confirm(sdag: SDag, root: bytes) -> set[bytes]:
    """Reference transitive closure over all three references."""
    out = set()
    stack = [root]
    while stack:
        bid = stack.pop()
        if bid in out or bid not in sdag.blocks:
            continue
        out.add(bid)
        b = sdag.blocks[bid]
        stack.extend((b.idp, b.idm, b.idt))
    return out


def reinsert_random_order(sdag: SDag, rng: random.Random) -> SDag:
    """Rebuild the DAG inserting blocks in a random order, retrying blocks
    whose parents have not landed yet."""
    blocks = [b for bid, b in sdag.blocks.items() if bid != sdag.genesis_id]
    rng.shuffle(blocks)
    rebuilt = SDag(sdag.params)
    pending = blocks
    while pending:
        progress = False
        still = []
        for block in pending:
            if all(r in rebuilt.blocks for r in (block.idp, block.idm, block.idt)):
                violation = rebuilt.insert(block)
                assert violation is None, violation
                progress = True
            else:
                still.append(block)
        assert progress, "no insertable block; DAG is not closed"
        pending = still
    return rebuilt


def dag_signature(sdag: SDag):
    """Everything that must be insertion-order independent."""
    return (
        sdag.main_chain,
        [sorted(lev) for lev in sdag.level_sets()],
        sorted(sdag.pending_set()),
        sorted(sdag.milestone_leaf_set()),
    )
