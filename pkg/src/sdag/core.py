"""Block primitives: canonical encoding, hashing, PoW classification, mining.

The hash function used as the random oracle is SHA-256; every identity and
every golden test vector in this project derives from it.  Difficulty
comparisons are done in exact 256-bit integer arithmetic so classification
is bit-exact across platforms.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence

HASH_BYTES = 32
SCALE_BITS = 256
SCALE = 1 << SCALE_BITS

ZERO_HASH = b"\x00" * HASH_BYTES
ZERO_PEER = b"\x00" * HASH_BYTES

MAX_NONCE = (1 << 64) - 1
MAX_PAYLOAD = (1 << 32) - 1


class EncodingError(ValueError):
    """Raised when a block or transaction cannot be (de)serialized."""


class MiningExhausted(Exception):
    """Mining gave up after the attempt budget; caller should refresh the template."""

    def __init__(self, attempts: int):
        super().__init__(f"no valid nonce found in {attempts} attempts")
        self.attempts = attempts


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


class TxKind(Enum):
    NORMAL = 1
    REGISTRATION = 2
    REDEMPTION = 3
    EMPTY = 4


class TxInput(NamedTuple):
    txid: bytes
    index: int
    witness: bytes


class TxOutput(NamedTuple):
    value: int
    address: bytes


@dataclass(frozen=True)
class Transaction:
    """A single transaction; the sole payload of a block.

    Normal txs spend previous outputs; Registration opens a miner's reward
    address; Redemption claims accrued mining rewards and rolls the address
    forward; Empty carries nothing (blocks mined with an idle mempool).
    """

    kind: TxKind
    inputs: tuple[TxInput, ...] = ()
    outputs: tuple[TxOutput, ...] = ()
    reward_claim: Optional[int] = None
    next_address: Optional[bytes] = None

    def __post_init__(self):
        if self.kind is TxKind.NORMAL:
            if not self.inputs or not self.outputs:
                raise ValueError("normal tx needs at least one input and one output")
        elif self.kind is TxKind.REGISTRATION:
            if self.inputs or self.next_address is None:
                raise ValueError("registration declares next_address and has no inputs")
        elif self.kind is TxKind.REDEMPTION:
            if self.reward_claim is None or self.next_address is None:
                raise ValueError("redemption declares reward_claim and next_address")
        elif self.kind is TxKind.EMPTY:
            if self.inputs or self.outputs:
                raise ValueError("empty tx carries no inputs or outputs")
        for addr in (self.next_address,):
            if addr is not None and len(addr) != HASH_BYTES:
                raise ValueError("address must be 32 bytes")
        for out in self.outputs:
            if len(out.address) != HASH_BYTES or out.value < 0:
                raise ValueError("bad output")

    def txid(self) -> bytes:
        return sha256(encode_tx(self))


EMPTY_TX = Transaction(TxKind.EMPTY)


def encode_tx(tx: Transaction) -> bytes:
    """Injective, length-prefixed encoding.  The Empty tx encodes to b''."""
    if tx.kind is TxKind.EMPTY:
        return b""
    parts = [bytes([tx.kind.value])]
    parts.append(struct.pack(">I", len(tx.inputs)))
    for txid, index, witness in tx.inputs:
        if len(txid) != HASH_BYTES:
            raise EncodingError("input txid must be 32 bytes")
        parts.append(txid)
        parts.append(struct.pack(">I", index))
        parts.append(struct.pack(">I", len(witness)))
        parts.append(witness)
    parts.append(struct.pack(">I", len(tx.outputs)))
    for value, address in tx.outputs:
        parts.append(struct.pack(">Q", value))
        parts.append(address)
    if tx.reward_claim is not None:
        parts.append(b"\x01" + struct.pack(">Q", tx.reward_claim))
    else:
        parts.append(b"\x00")
    if tx.next_address is not None:
        parts.append(b"\x01" + tx.next_address)
    else:
        parts.append(b"\x00")
    return b"".join(parts)


def sighash(tx: Transaction) -> bytes:
    """Digest signed by input witnesses: the tx encoding with witnesses blanked."""
    stripped = Transaction(
        kind=tx.kind,
        inputs=tuple(TxInput(i.txid, i.index, b"") for i in tx.inputs),
        outputs=tx.outputs,
        reward_claim=tx.reward_claim,
        next_address=tx.next_address,
    )
    return sha256(encode_tx(stripped))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise EncodingError("truncated encoding")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def done(self) -> bool:
        return self.pos == len(self.data)


def decode_tx(data: bytes) -> Transaction:
    if data == b"":
        return EMPTY_TX
    r = _Reader(data)
    kind = TxKind(r.take(1)[0])
    inputs = []
    for _ in range(r.u32()):
        txid = r.take(HASH_BYTES)
        index = r.u32()
        witness = r.take(r.u32())
        inputs.append(TxInput(txid, index, witness))
    outputs = []
    for _ in range(r.u32()):
        value = r.u64()
        address = r.take(HASH_BYTES)
        outputs.append(TxOutput(value, address))
    reward_claim = r.u64() if r.take(1) == b"\x01" else None
    next_address = r.take(HASH_BYTES) if r.take(1) == b"\x01" else None
    if not r.done():
        raise EncodingError("trailing bytes in tx encoding")
    return Transaction(kind, tuple(inputs), tuple(outputs), reward_claim, next_address)


@dataclass(frozen=True)
class Block:
    """The six-field block: three backward references, creator, nonce, payload."""

    idp: bytes
    idm: bytes
    idt: bytes
    peer: bytes
    pow: int
    mes: Transaction

    def __post_init__(self):
        for ref in (self.idp, self.idm, self.idt, self.peer):
            if len(ref) != HASH_BYTES:
                raise ValueError("references and peer id must be 32 bytes")
        if not 0 <= self.pow <= MAX_NONCE:
            raise ValueError("nonce must fit in 64 bits")


def canonical_encode(block: Block) -> bytes:
    """idp(32) | idm(32) | idt(32) | peer(32) | pow(8 BE) | len(mes)(4 BE) | mes."""
    mes = encode_tx(block.mes)
    if len(mes) > MAX_PAYLOAD:
        raise EncodingError("payload exceeds 2^32-1 bytes")
    return b"".join(
        (
            block.idp,
            block.idm,
            block.idt,
            block.peer,
            struct.pack(">Q", block.pow),
            struct.pack(">I", len(mes)),
            mes,
        )
    )


def decode_block(data: bytes) -> Block:
    r = _Reader(data)
    idp = r.take(HASH_BYTES)
    idm = r.take(HASH_BYTES)
    idt = r.take(HASH_BYTES)
    peer = r.take(HASH_BYTES)
    pow_ = r.u64()
    mes = decode_tx(r.take(r.u32()))
    if not r.done():
        raise EncodingError("trailing bytes in block encoding")
    return Block(idp, idm, idt, peer, pow_, mes)


def block_id(block: Block) -> bytes:
    return sha256(canonical_encode(block))


def unit_fraction(h: bytes) -> Fraction:
    """The 32 bytes read as a big-endian integer N, mapped to N / 2**256 in [0, 1)."""
    if len(h) != HASH_BYTES:
        raise ValueError("expected a 32-byte digest")
    return Fraction(int.from_bytes(h, "big"), SCALE)


def _scaled_threshold(x: Fraction) -> int:
    # N < x  <=>  N < ceil(x * 2**256) for integer N
    num = x.numerator << SCALE_BITS
    den = x.denominator
    return -(-num // den)


class BlockClass(Enum):
    INVALID = 0
    REGULAR = 1
    MILESTONE = 2


@dataclass(frozen=True)
class Params:
    """Protocol constants: difficulty, milestone share, assignment and rewards."""

    d: Fraction
    p: Fraction
    c: Fraction = Fraction(1, 10)
    r_n: int = 0
    r_m: int = 1
    delta: Fraction = Fraction(0)

    def __post_init__(self):
        if not (0 < self.d <= 1):
            raise ValueError("difficulty d must be in (0, 1]")
        if not (0 < self.p <= 1):
            raise ValueError("milestone probability p must be in (0, 1]")
        if not (0 < self.p * self.d <= self.d):
            raise ValueError("need 0 < p*d <= d")
        if not (self.r_m > self.r_n >= 0):
            raise ValueError("need r_m > r_n >= 0")
        if not (0 <= self.delta <= 1):
            raise ValueError("delta must be in [0, 1]")
        object.__setattr__(self, "_d_thresh", _scaled_threshold(self.d))
        object.__setattr__(self, "_ms_thresh", _scaled_threshold(self.p * self.d))

    @property
    def d_threshold(self) -> int:
        return self._d_thresh

    @property
    def ms_threshold(self) -> int:
        return self._ms_thresh


def classify_hash(h: bytes, params: Params) -> BlockClass:
    n = int.from_bytes(h, "big")
    if n < params.ms_threshold:
        return BlockClass.MILESTONE
    if n < params.d_threshold:
        return BlockClass.REGULAR
    return BlockClass.INVALID


def classify(block: Block, params: Params) -> BlockClass:
    return classify_hash(block_id(block), params)


class MineResult(NamedTuple):
    block: Block
    attempts: int


def mine(
    template: Block,
    params: Params,
    max_attempts: int,
    start_nonce: int = 0,
    want: Optional[BlockClass] = None,
) -> MineResult:
    """Grind the nonce until the block classifies as valid (or as `want`).

    Nonces are tried sequentially from start_nonce so fixtures are
    deterministic.  Raises MiningExhausted after max_attempts.
    """
    prefix = canonical_encode(template)[: 4 * HASH_BYTES]
    mes = encode_tx(template.mes)
    suffix = struct.pack(">I", len(mes)) + mes
    for i in range(max_attempts):
        nonce = (start_nonce + i) & MAX_NONCE
        h = sha256(prefix + struct.pack(">Q", nonce) + suffix)
        cls = classify_hash(h, params)
        if cls is BlockClass.INVALID:
            continue
        if want is None or cls is want:
            block = Block(template.idp, template.idm, template.idt, template.peer, nonce, template.mes)
            return MineResult(block, i + 1)
    raise MiningExhausted(max_attempts)


def tx_distance(head_id: bytes, tx: Transaction) -> Fraction:
    """Hash-derived distance in [0, 1) between a chain head and a transaction."""
    if len(head_id) != HASH_BYTES:
        raise ValueError("head id must be 32 bytes")
    return unit_fraction(sha256(head_id + encode_tx(tx)))


# The genesis block: all references absent (zero hashes), zero peer, empty
# payload.  It is exempt from PoW and carries the trusted setup implicitly
# (initial funded outputs are supplied to ledger construction separately).
GENESIS = Block(ZERO_HASH, ZERO_HASH, ZERO_HASH, ZERO_PEER, 0, EMPTY_TX)
GENESIS_ID = block_id(GENESIS)
