"""DAG-to-ledger: ordering, UTXO folding, rewards, redemption chain."""

import io
from fractions import Fraction

import pytest

from sdag.core import (
    EMPTY_TX,
    GENESIS_ID,
    Block,
    BlockClass,
    Params,
    Transaction,
    TxInput,
    TxKind,
    TxOutput,
    mine,
    block_id,
    sha256,
    sighash,
)
from sdag.dag import SDag
from sdag.ledger import (
    BlockKind,
    ChainStatus,
    TxValidity,
    accrued_rewards,
    block_reward,
    build_from_dag,
    dfs_order,
    ledger_csv,
    resolve_peer_chain,
    validate_redemption,
    BadSignature,
    WrongAmount,
)
from sdag.sigs import DEFAULT_SCHEME

PARAMS = Params(
    d=Fraction(1), p=Fraction(1, 4), c=Fraction(1, 10), r_n=1, r_m=3, delta=Fraction(1, 2)
)

S = DEFAULT_SCHEME
A_SECRET = sha256(b"ledger-A")
B_SECRET = sha256(b"ledger-B")
U_SECRET = sha256(b"ledger-user")
A_PUB, B_PUB, U_PUB = (S.derive_public(s) for s in (A_SECRET, B_SECRET, U_SECRET))
A_ADDR, B_ADDR, U_ADDR = (S.address(p) for p in (A_PUB, B_PUB, U_PUB))

GENESIS_OUTPUTS = ((10, U_ADDR), (10, U_ADDR))


def signed_normal(outpoint_txid, index, outputs, secret=U_SECRET, pub=U_PUB, garble=False):
    bare = Transaction(
        TxKind.NORMAL,
        inputs=(TxInput(outpoint_txid, index, b""),),
        outputs=tuple(outputs),
    )
    sig = S.sign(secret, sighash(bare))
    if garble:
        sig = bytes(64)
    return Transaction(
        TxKind.NORMAL,
        inputs=(TxInput(outpoint_txid, index, pub + sig),),
        outputs=bare.outputs,
    )


class Builder:
    """Grow a tiny valid DAG with chosen payloads; d=1 keeps mining cheap."""

    def __init__(self):
        self.sdag = SDag(PARAMS)
        self.heads = {A_ADDR: GENESIS_ID, B_ADDR: GENESIS_ID}

    def add(self, peer, mes, want=BlockClass.REGULAR, idm=None, idt=None, idp=None):
        template = Block(
            idp=idp if idp is not None else self.heads[peer],
            idm=idm if idm is not None else self.sdag.chain_tip(),
            idt=idt if idt is not None else GENESIS_ID,
            peer=peer,
            pow=0,
            mes=mes,
        )
        block = mine(template, PARAMS, 1_000_000, want=want).block
        violation = self.sdag.insert(block)
        assert violation is None, violation
        bid = block_id(block)
        if idp is None:
            self.heads[peer] = bid
        return bid


def reg(addr):
    return Transaction(TxKind.REGISTRATION, next_address=addr)


@pytest.fixture()
def chain():
    """A registers and mines two txs; B registers and mines the milestones."""
    b = Builder()
    b.a1 = b.add(A_ADDR, reg(A_ADDR))
    b.b1 = b.add(B_ADDR, reg(B_ADDR))
    b.t1 = signed_normal(GENESIS_ID, 0, [TxOutput(9, U_ADDR)])  # fee 1
    b.a2 = b.add(A_ADDR, b.t1)
    b.m1 = b.add(B_ADDR, EMPTY_TX, want=BlockClass.MILESTONE, idt=b.a2)
    b.t2 = signed_normal(GENESIS_ID, 1, [TxOutput(10, U_ADDR)])  # fee 0
    b.a3 = b.add(A_ADDR, b.t2)
    b.m2 = b.add(B_ADDR, EMPTY_TX, want=BlockClass.MILESTONE, idt=b.a3)
    return b


def test_reward_table_rows():
    assert block_reward(BlockKind.REGULAR_PLUS, ChainStatus.FORKED, TxValidity.VALID, 5, 9, PARAMS) == 0
    assert block_reward(BlockKind.REGULAR_PLUS, ChainStatus.ON_PEER_CHAIN, TxValidity.NONE, 0, 9, PARAMS) == 1
    assert block_reward(BlockKind.REGULAR_PLUS, ChainStatus.ON_PEER_CHAIN, TxValidity.VALID, 5, 9, PARAMS) == 6
    assert block_reward(BlockKind.REGULAR_PLUS, ChainStatus.ON_PEER_CHAIN, TxValidity.INVALID, 5, 9, PARAMS) == 1
    # milestone bonus: delta * r_n * (|lev| - 1) = 4 at |lev| = 9
    assert block_reward(BlockKind.MAIN_MILESTONE, ChainStatus.ON_PEER_CHAIN, TxValidity.NONE, 0, 9, PARAMS) == 7
    assert block_reward(BlockKind.MAIN_MILESTONE, ChainStatus.ON_PEER_CHAIN, TxValidity.VALID, 2, 9, PARAMS) == 9
    assert block_reward(BlockKind.MAIN_MILESTONE, ChainStatus.ON_PEER_CHAIN, TxValidity.NONE, 0, 1, PARAMS) == 3


def test_basic_build_accepts_and_rewards(chain):
    build = build_from_dag(chain.sdag, PARAMS, GENESIS_OUTPUTS)
    by_block = {e.block_id: e for e in build.ledger.entries}
    assert by_block[chain.a2].accepted
    assert by_block[chain.a3].accepted
    # fee flows into the block reward
    assert build.rewards[chain.a2].amount == 1 + 1
    assert build.rewards[chain.a3].amount == 1 + 0
    assert build.rewards[chain.m1].kind is BlockKind.MAIN_MILESTONE
    # both spends landed: genesis outputs gone, new outputs present
    utxo = build.ledger.utxo
    assert (GENESIS_ID, 0) not in {(op.txid, op.index) for op in utxo}
    assert sum(v for v, _ in utxo.values()) == 19


def test_double_spend_first_seen_wins(chain):
    conflict = signed_normal(GENESIS_ID, 0, [TxOutput(10, U_ADDR)])
    cb = chain.add(A_ADDR, conflict)
    chain.add(B_ADDR, EMPTY_TX, want=BlockClass.MILESTONE, idt=cb)
    build = build_from_dag(chain.sdag, PARAMS, GENESIS_OUTPUTS)
    entries = {e.txid: e for e in build.ledger.entries}
    assert entries[chain.t1.txid()].accepted
    bad = entries[conflict.txid()]
    assert not bad.accepted and bad.reason == "input not in utxo"


def test_duplicate_tx_rejected_once(chain):
    chain.add(B_ADDR, chain.t1)  # same payload in a second block
    chain.add(B_ADDR, EMPTY_TX, want=BlockClass.MILESTONE)
    build = build_from_dag(chain.sdag, PARAMS, GENESIS_OUTPUTS)
    flags = [
        (e.accepted, e.reason)
        for e in build.ledger.entries
        if e.txid == chain.t1.txid()
    ]
    assert flags == [(True, ""), (False, "duplicate")]


def test_bad_signature_and_overspend_rejected(chain):
    garbled = signed_normal(chain.t1.txid(), 0, [TxOutput(9, U_ADDR)], garble=True)
    overspend = signed_normal(chain.t2.txid(), 0, [TxOutput(11, U_ADDR)])
    chain.add(A_ADDR, garbled)
    ob = chain.add(A_ADDR, overspend)
    chain.add(B_ADDR, EMPTY_TX, want=BlockClass.MILESTONE, idt=ob)
    build = build_from_dag(chain.sdag, PARAMS, GENESIS_OUTPUTS)
    entries = {e.txid: e for e in build.ledger.entries}
    assert entries[garbled.txid()].reason == "bad signature"
    assert entries[overspend.txid()].reason == "outputs exceed inputs"


def test_build_deterministic_and_reload_stable(chain):
    b1 = build_from_dag(chain.sdag, PARAMS, GENESIS_OUTPUTS)
    b2 = build_from_dag(chain.sdag, PARAMS, GENESIS_OUTPUTS)
    assert ledger_csv(b1) == ledger_csv(b2)
    reloaded = SDag.load(io.StringIO(chain.sdag.dumps()), PARAMS)
    b3 = build_from_dag(reloaded, PARAMS, GENESIS_OUTPUTS)
    assert ledger_csv(b3) == ledger_csv(b1)
    assert b3.ledger.utxo_digest() == b1.ledger.utxo_digest()


def test_finality_depth_limits_rewards(chain):
    full = build_from_dag(chain.sdag, PARAMS, GENESIS_OUTPUTS, finality_depth=0)
    partial = build_from_dag(chain.sdag, PARAMS, GENESIS_OUTPUTS, finality_depth=1)
    assert partial.finalized_levels == len(chain.sdag.main_chain) - 1
    assert set(partial.rewards) < set(full.rewards)
    for bid, rec in partial.rewards.items():
        assert rec == full.rewards[bid]


def test_peer_chain_chronology_in_dfs(chain):
    sdag = chain.sdag
    for ms in sdag.main_chain[1:]:
        order = dfs_order(sdag, ms)
        pos = {bid: i for i, bid in enumerate(order)}
        for bid in order:
            parent = sdag.blocks[bid].idp
            if parent in pos:
                assert pos[parent] < pos[bid]


# -- registration and redemption ------------------------------------------


def make_redemption(claim, secret, next_address):
    bare = Transaction(
        TxKind.REDEMPTION,
        inputs=(TxInput(bytes(32), 0, b""),),
        reward_claim=claim,
        next_address=next_address,
    )
    witness = S.derive_public(secret) + S.sign(secret, sighash(bare))
    return Transaction(
        TxKind.REDEMPTION,
        inputs=(TxInput(bytes(32), 0, witness),),
        reward_claim=claim,
        next_address=next_address,
    )


def accrued_for(chain, miner):
    build = build_from_dag(chain.sdag, PARAMS, GENESIS_OUTPUTS)
    view = build.peer_views[miner]
    return build, view, accrued_rewards(chain.sdag, view, build.rewards)


def test_redemption_happy_path(chain):
    _, _, accrued = accrued_for(chain, A_ADDR)
    assert accrued > 0
    red = make_redemption(accrued, A_SECRET, A_ADDR)
    red_block = chain.add(A_ADDR, red)
    chain.add(B_ADDR, EMPTY_TX, want=BlockClass.MILESTONE, idt=red_block)
    build = build_from_dag(chain.sdag, PARAMS, GENESIS_OUTPUTS)
    entry = next(e for e in build.ledger.entries if e.txid == red.txid())
    assert entry.accepted, entry.reason
    # the claim becomes a spendable output at the rolled-forward address
    assert build.ledger.utxo[(red.txid(), 0)] == (accrued, A_ADDR)
    view = build.peer_views[A_ADDR]
    validate_redemption(chain.sdag, view, red_block, build.rewards)


def test_redemption_wrong_amount_rejected(chain):
    _, _, accrued = accrued_for(chain, A_ADDR)
    red = make_redemption(accrued + 1, A_SECRET, A_ADDR)
    red_block = chain.add(A_ADDR, red)
    chain.add(B_ADDR, EMPTY_TX, want=BlockClass.MILESTONE, idt=red_block)
    build = build_from_dag(chain.sdag, PARAMS, GENESIS_OUTPUTS)
    entry = next(e for e in build.ledger.entries if e.txid == red.txid())
    assert not entry.accepted and "claimed" in entry.reason
    with pytest.raises(WrongAmount):
        validate_redemption(chain.sdag, build.peer_views[A_ADDR], red_block, build.rewards)


def test_redemption_wrong_key_rejected(chain):
    _, _, accrued = accrued_for(chain, A_ADDR)
    red = make_redemption(accrued, B_SECRET, A_ADDR)  # signed by the wrong key
    red_block = chain.add(A_ADDR, red)
    chain.add(B_ADDR, EMPTY_TX, want=BlockClass.MILESTONE, idt=red_block)
    build = build_from_dag(chain.sdag, PARAMS, GENESIS_OUTPUTS)
    entry = next(e for e in build.ledger.entries if e.txid == red.txid())
    assert not entry.accepted and "signature" in entry.reason
    with pytest.raises(BadSignature):
        validate_redemption(chain.sdag, build.peer_views[A_ADDR], red_block, build.rewards)


def test_registration_only_at_chain_start(chain):
    # a late re-registration earns the block its reward but is not accepted
    late = chain.add(A_ADDR, reg(B_ADDR))
    chain.add(B_ADDR, EMPTY_TX, want=BlockClass.MILESTONE, idt=late)
    build = build_from_dag(chain.sdag, PARAMS, GENESIS_OUTPUTS)
    entry = next(e for e in build.ledger.entries if e.block_id == late)
    assert not entry.accepted
    view = build.peer_views[A_ADDR]
    assert view.current_address == A_ADDR  # the hijack did not move the payout


def test_forked_branch_earns_nothing(chain):
    # a second child of a1 forks A's chain; the canonical branch wins on length
    fork = chain.add(A_ADDR, EMPTY_TX, idp=chain.a1)
    chain.add(B_ADDR, EMPTY_TX, want=BlockClass.MILESTONE, idt=fork)
    build = build_from_dag(chain.sdag, PARAMS, GENESIS_OUTPUTS)
    view = build.peer_views[A_ADDR]
    assert fork in view.forked
    assert build.rewards[fork].status is ChainStatus.FORKED
    assert build.rewards[fork].amount == 0


def test_unsigned_longer_branch_loses_to_redeemed_chain(chain):
    # A redeems on the true chain; an impersonator extends a fork of a1
    _, _, accrued = accrued_for(chain, A_ADDR)
    red = make_redemption(accrued, A_SECRET, A_ADDR)
    red_block = chain.add(A_ADDR, red)
    true_len = len(resolve_peer_chain(chain.sdag, A_ADDR).blocks)
    prev = chain.a1
    forged = []
    for _ in range(true_len + 3):  # longer than the true chain
        prev = chain.add(A_ADDR, EMPTY_TX, idp=prev)
        forged.append(prev)
    chain.add(B_ADDR, EMPTY_TX, want=BlockClass.MILESTONE, idt=red_block)
    chain.add(B_ADDR, EMPTY_TX, want=BlockClass.MILESTONE, idt=forged[-1])
    build = build_from_dag(chain.sdag, PARAMS, GENESIS_OUTPUTS)
    view = build.peer_views[A_ADDR]
    # redemption continuity outranks length: the true chain stays canonical
    assert all(f in view.forked for f in forged)
    assert all(build.rewards[f].amount == 0 for f in forged if f in build.rewards)
    entry = next(e for e in build.ledger.entries if e.txid == red.txid())
    assert entry.accepted


def test_csv_shape(chain):
    build = build_from_dag(chain.sdag, PARAMS, GENESIS_OUTPUTS)
    lines = ledger_csv(build).strip().splitlines()
    assert lines[0] == "level,position,block_id,tx_id,accepted,reward"
    assert len(lines) == len(build.ledger.entries) + 1
