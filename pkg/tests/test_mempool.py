"""Mempool assignment, power estimation, collision closed forms."""

import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from sdag.core import Transaction, TxKind, TxOutput, TxInput, sha256, tx_distance
from sdag.mempool import (
    Mempool,
    collision_prob,
    collision_prob_exact,
    estimate_power,
    no_worker_prob,
    no_worker_prob_exact,
    one_worker_prob,
    one_worker_prob_exact,
)

HEAD = sha256(b"head")


def normal_tx(i):
    return Transaction(
        TxKind.NORMAL,
        inputs=(TxInput(sha256(b"in%d" % i), 0, b"w" * 96),),
        outputs=(TxOutput(1, sha256(b"out")),),
    )


def test_add_remove_contains():
    pool = Mempool()
    tx = normal_tx(0)
    assert pool.add_tx(tx, now=1.0, fee=2)
    assert not pool.add_tx(tx, now=2.0, fee=2)  # duplicate is a no-op
    assert tx.txid() in pool and len(pool) == 1
    entry = pool.remove_tx(tx.txid())
    assert entry is not None and entry.fee == 2 and entry.arrived == 1.0
    assert pool.remove_tx(tx.txid()) is None


def test_capacity_cap():
    pool = Mempool(capacity=2)
    assert pool.add_tx(normal_tx(0), 0.0)
    assert pool.add_tx(normal_tx(1), 0.0)
    assert not pool.add_tx(normal_tx(2), 0.0)


def test_workable_threshold_and_order():
    pool = Mempool()
    txs = [normal_tx(i) for i in range(40)]
    for i, tx in enumerate(txs):
        pool.add_tx(tx, 0.0, fee=i % 3)
    cq = Fraction(1, 2)
    got = pool.workable(HEAD, cq)
    expect = {tx.txid() for tx in txs if tx_distance(HEAD, tx) <= cq}
    assert set(got) == expect
    # fee descending, then distance to this head
    keyed = [
        (-pool.entries[txid].fee, tx_distance(HEAD, pool.entries[txid].tx))
        for txid in got
    ]
    assert keyed == sorted(keyed)
    assert pool.workable(HEAD, Fraction(0)) == []
    assert set(pool.workable(HEAD, Fraction(1))) == {tx.txid() for tx in txs}


@given(st.integers(0, 2**32))
def test_workable_monotone_in_cq(seed):
    pool = Mempool()
    for i in range(10):
        pool.add_tx(normal_tx(seed % 7 * 10 + i), 0.0)
    small = set(pool.workable(HEAD, Fraction(1, 8)))
    large = set(pool.workable(HEAD, Fraction(1, 2)))
    assert small <= large


def test_estimate_power_counts_recent_levels(demo):
    sdag = demo.sdag
    est = estimate_power(sdag, demo.peers[1], window=20)
    # miner 1 owns a1 and d-level blocks... count directly
    total = mine = 0
    for lev in sdag.level_sets()[1:]:
        for bid in lev:
            total += 1
            if sdag.blocks[bid].peer == demo.peers[1]:
                mine += 1
    assert est.q == Fraction(mine, total)
    # window of 1: only the last level set counts
    last = sdag.level_set(sdag.main_chain[-1])
    in_last = sum(1 for b in last if sdag.blocks[b].peer == demo.peers[1])
    est1 = estimate_power(sdag, demo.peers[1], window=1)
    if in_last:
        assert est1.q == Fraction(in_last, len(last))
    with pytest.raises(ValueError):
        estimate_power(sdag, demo.peers[1], window=0)


def test_estimate_power_no_data():
    from sdag.dag import SDag
    from sdag.core import Params

    empty = SDag(Params(d=Fraction(1), p=Fraction(1, 2)))
    assert estimate_power(empty, sha256(b"nobody")).q == Fraction(1)


def test_collision_closed_forms():
    c = 0.1
    assert collision_prob(c) == pytest.approx(
        1 - math.exp(-c) - c * math.exp(-c), abs=1e-12
    )
    assert no_worker_prob(c) + one_worker_prob(c) + collision_prob(c) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        collision_prob(-1.0)


def test_exact_forms_converge_to_limit():
    c = 0.1
    for n in (100, 1000, 10000):
        shares = [1.0 / n] * n
        assert no_worker_prob_exact(c, shares) == pytest.approx(
            no_worker_prob(c), rel=1e-3 * 100 / n + 1e-6
        )
    shares = [1.0 / 1000] * 1000
    assert one_worker_prob_exact(c, shares) == pytest.approx(one_worker_prob(c), rel=1e-3)
    assert collision_prob_exact(c, shares) == pytest.approx(collision_prob(c), rel=2e-2)
    with pytest.raises(ValueError):
        one_worker_prob_exact(2.0, [0.6, 0.4])
