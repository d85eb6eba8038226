"""Transaction and block model, validation rules, yield schedule, and the
ledger state machine.

Amounts are integer quanta throughout (the profile's quantum fixes their
unit value); balances live in an account model keyed by address.  Blocks
apply atomically: any rule violation rejects the whole block and leaves
the state untouched.

Conservation holds exactly at every block boundary:

    sum(balances) + penalty_pool + parked_future
        == minted_total - destroyed_total

where parked_future counts future-transaction outputs not yet released.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

from . import crypto
from .crypto import ADDRESS_LEN, NONCE_LEN, SOLUTION_LEN, Puzzle, Signer
from .meadow import Rat
from .profiles import MoneyProfile
from .units import Quantity
from .wire import Reader, Writer

__all__ = [
    "Amount",
    "Ordinary",
    "Future",
    "ConditionalFuture",
    "Restitution",
    "KeyDestruction",
    "Transaction",
    "MiningStep",
    "Block",
    "LedgerState",
    "TxRejected",
    "BlockRejected",
    "tx_bytes",
    "tx_signing_bytes",
    "tx_id",
    "decode_transaction",
    "block_bytes",
    "block_signing_bytes",
    "block_id",
    "decode_block",
    "validate_transaction",
    "apply_block",
    "block_yield",
    "circulation_bound",
    "coin_age",
    "amount_to_quantity",
    "build_transaction",
    "build_block",
    "make_block_puzzle",
]

Amount = int  # nonnegative integer count of quanta

GENESIS_PREV = b""


# -- transaction variants -------------------------------------------------


@dataclass(frozen=True)
class Ordinary:
    tag = 0


@dataclass(frozen=True)
class Future:
    tag = 1
    activation_height: int = 0


@dataclass(frozen=True)
class ConditionalFuture:
    tag = 2


@dataclass(frozen=True)
class Restitution:
    tag = 3
    original: bytes = b""  # id of the transaction being returned


@dataclass(frozen=True)
class KeyDestruction:
    tag = 4


Variant = Union[Ordinary, Future, ConditionalFuture, Restitution, KeyDestruction]

_VARIANT_BY_TAG = {0: Ordinary, 1: Future, 2: ConditionalFuture, 3: Restitution, 4: KeyDestruction}


@dataclass(frozen=True)
class Transaction:
    """Signed transfer: inputs and outputs are (address, amount) pairs and
    the declared amounts satisfy sum(inputs) == sum(outputs) + fee."""

    nonce: bytes
    inputs: tuple[tuple[bytes, Amount], ...]
    outputs: tuple[tuple[bytes, Amount], ...]
    fee: Amount
    variant: Variant = Ordinary()
    signatures: tuple[bytes, ...] = ()


@dataclass(frozen=True)
class MiningStep:
    """The tuple (d, n, m, g, h, P, s) closing a block.

    d: miner address; n: covered transaction count; m: difficulty;
    g: collected fees; h: newly created amount; puzzle and its solution s.
    The puzzle is recomputed from chain context during validation, so only
    (d, n, m, g, h, s) travel on the wire.
    """

    d: bytes
    n: int
    m: int
    g: Amount
    h: Amount
    puzzle: Puzzle
    s: bytes


@dataclass(frozen=True)
class Block:
    k: int
    prev: bytes  # digest of predecessor; empty for genesis
    txs: tuple[Transaction, ...]
    step: MiningStep
    miner_sig: bytes


# -- canonical serialization ------------------------------------------------


def _write_pairs(w: Writer, pairs: Sequence[tuple[bytes, Amount]]) -> None:
    w.u32(len(pairs))
    for address, amount in pairs:
        w.fixed(address, ADDRESS_LEN)
        w.amount(amount)


def _read_pairs(r: Reader) -> tuple[tuple[bytes, Amount], ...]:
    n = r.u32()
    return tuple((r.fixed(ADDRESS_LEN), r.amount()) for _ in range(n))


def _write_variant(w: Writer, variant: Variant, digest_len: int) -> None:
    w.u8(variant.tag)
    if isinstance(variant, Future):
        w.u64(variant.activation_height)
    elif isinstance(variant, Restitution):
        w.fixed(variant.original, digest_len)


def _read_variant(r: Reader, digest_len: int) -> Variant:
    tag = r.u8()
    if tag not in _VARIANT_BY_TAG:
        raise ValueError(f"unknown transaction variant tag {tag}")
    if tag == Future.tag:
        return Future(r.u64())
    if tag == Restitution.tag:
        return Restitution(r.fixed(digest_len))
    return _VARIANT_BY_TAG[tag]()


def _tx_body(w: Writer, tx: Transaction, digest_len: int) -> None:
    w.u8(1)  # record version
    w.fixed(tx.nonce, NONCE_LEN)
    _write_pairs(w, tx.inputs)
    _write_pairs(w, tx.outputs)
    w.amount(tx.fee)
    _write_variant(w, tx.variant, digest_len)


def tx_signing_bytes(tx: Transaction, digest_len: int = 32) -> bytes:
    """Preimage each input holder signs: the transaction without signatures."""
    w = Writer()
    _tx_body(w, tx, digest_len)
    return w.getvalue()


def tx_bytes(tx: Transaction, digest_len: int = 32) -> bytes:
    w = Writer()
    _tx_body(w, tx, digest_len)
    w.u32(len(tx.signatures))
    for sig in tx.signatures:
        w.var_bytes(sig)
    return w.getvalue()


def tx_id(tx: Transaction, digest_len: int = 32) -> bytes:
    return crypto.digest(tx_bytes(tx, digest_len), digest_len)


def decode_transaction(data: bytes, digest_len: int = 32) -> Transaction:
    r = Reader(data)
    tx = _read_transaction(r, digest_len)
    r.expect_end()
    return tx


def _read_transaction(r: Reader, digest_len: int) -> Transaction:
    version = r.u8()
    if version != 1:
        raise ValueError(f"unsupported transaction version {version}")
    nonce = r.fixed(NONCE_LEN)
    inputs = _read_pairs(r)
    outputs = _read_pairs(r)
    fee = r.amount()
    variant = _read_variant(r, digest_len)
    nsig = r.u32()
    signatures = tuple(r.var_bytes() for _ in range(nsig))
    return Transaction(nonce, inputs, outputs, fee, variant, signatures)


def _block_body(w: Writer, block: Block, digest_len: int) -> None:
    w.u8(1)  # record version
    w.u64(block.k)
    if block.prev:
        w.u8(1)
        w.fixed(block.prev, digest_len)
    else:
        w.u8(0)
    w.u32(len(block.txs))
    for tx in block.txs:
        w.var_bytes(tx_bytes(tx, digest_len))
    step = block.step
    w.fixed(step.d, ADDRESS_LEN)
    w.u64(step.n)
    w.u64(step.m)
    w.amount(step.g)
    w.amount(step.h)
    w.fixed(step.s, SOLUTION_LEN)


def block_signing_bytes(block: Block, digest_len: int = 32) -> bytes:
    """Preimage of the miner signature: everything before the signature."""
    w = Writer()
    _block_body(w, block, digest_len)
    return w.getvalue()


def block_bytes(block: Block, digest_len: int = 32) -> bytes:
    w = Writer()
    _block_body(w, block, digest_len)
    w.var_bytes(block.miner_sig)
    return w.getvalue()


def block_id(block: Block, digest_len: int = 32) -> bytes:
    return crypto.digest(block_bytes(block, digest_len), digest_len)


def decode_block(data: bytes, profile: MoneyProfile) -> Block:
    digest_len = profile.digest_len
    r = Reader(data)
    version = r.u8()
    if version != 1:
        raise ValueError(f"unsupported block version {version}")
    k = r.u64()
    prev = r.fixed(digest_len) if r.u8() else GENESIS_PREV
    ntx = r.u32()
    txs = tuple(decode_transaction(r.var_bytes(), digest_len) for _ in range(ntx))
    d = r.fixed(ADDRESS_LEN)
    n = r.u64()
    m = r.u64()
    g = r.amount()
    h = r.amount()
    s = r.fixed(SOLUTION_LEN)
    miner_sig = r.var_bytes()
    r.expect_end()
    puzzle = make_block_puzzle(prev, d, n, m, profile)
    return Block(k, prev, txs, MiningStep(d, n, m, g, h, puzzle, s), miner_sig)


# -- yield schedule ----------------------------------------------------------


def block_yield(profile: MoneyProfile, height: int) -> Amount:
    """New coin created at the given height: h0 halved every H blocks,
    rounded down in quanta, zero from epoch E on."""
    if height < 0:
        raise ValueError("height must be nonnegative")
    epoch = height // profile.halving_interval
    if epoch >= profile.epoch_limit:
        return 0
    return profile.initial_yield >> epoch


def circulation_bound(profile: MoneyProfile) -> Amount:
    """Upper bound on total circulation: the infinite-series limit
    2 * h0 * H of the halving schedule, in quanta.  Actual minting stays
    below it (the schedule stops after E epochs and rounds down)."""
    return 2 * profile.initial_yield * profile.halving_interval


def amount_to_quantity(amount: Amount, profile: MoneyProfile) -> Quantity:
    return Quantity(Rat(amount) * profile.quantum, profile.dimension)


# -- ledger state -------------------------------------------------------------


@dataclass(frozen=True)
class ConditionalObligation:
    """Admitted conditional-future transfer waiting for funds.

    ``required`` holds the still-to-debit (address, amount) pairs (the fee
    was already collected at admission)."""

    txid: bytes
    required: tuple[tuple[bytes, Amount], ...]
    outputs: tuple[tuple[bytes, Amount], ...]
    admitted_height: int


@dataclass(frozen=True)
class TxRecord:
    """What later rules need to know about an applied transaction."""

    sender: bytes  # first input address; restitutions return here
    kind: int      # variant tag
    received: tuple[tuple[bytes, Amount], ...]


@dataclass
class LedgerState:
    balances: dict[bytes, Amount] = field(default_factory=dict)
    seen_nonces: set[bytes] = field(default_factory=set)
    destroyed: set[bytes] = field(default_factory=set)
    penalty_pool: Amount = 0
    pending_future: list[tuple[int, bytes, tuple[tuple[bytes, Amount], ...]]] = field(default_factory=list)
    pending_conditional: list[ConditionalObligation] = field(default_factory=list)
    minted_total: Amount = 0
    destroyed_total: Amount = 0
    last_touched: dict[bytes, int] = field(default_factory=dict)
    tx_index: dict[bytes, TxRecord] = field(default_factory=dict)

    def copy(self) -> "LedgerState":
        return LedgerState(
            balances=dict(self.balances),
            seen_nonces=set(self.seen_nonces),
            destroyed=set(self.destroyed),
            penalty_pool=self.penalty_pool,
            pending_future=list(self.pending_future),
            pending_conditional=list(self.pending_conditional),
            minted_total=self.minted_total,
            destroyed_total=self.destroyed_total,
            last_touched=dict(self.last_touched),
            tx_index=dict(self.tx_index),
        )

    def balance(self, address: bytes) -> Amount:
        return self.balances.get(address, 0)

    def parked_future_total(self) -> Amount:
        return sum(amt for _, _, outs in self.pending_future for _, amt in outs)

    def pending_conditional_total(self) -> Amount:
        return sum(amt for o in self.pending_conditional for _, amt in o.outputs)

    def conservation_holds(self) -> bool:
        circulating = sum(self.balances.values()) + self.penalty_pool + self.parked_future_total()
        return circulating == self.minted_total - self.destroyed_total

    def __eq__(self, other):
        if not isinstance(other, LedgerState):
            return NotImplemented
        return (
            self.balances == other.balances
            and self.seen_nonces == other.seen_nonces
            and self.destroyed == other.destroyed
            and self.penalty_pool == other.penalty_pool
            and self.pending_future == other.pending_future
            and self.pending_conditional == other.pending_conditional
            and self.minted_total == other.minted_total
            and self.destroyed_total == other.destroyed_total
            and self.last_touched == other.last_touched
            and self.tx_index == other.tx_index
        )


def coin_age(state: LedgerState, address: bytes, current_height: int) -> int:
    """Blocks since the last transaction touching the address; 0 when unseen."""
    born = state.last_touched.get(address)
    if born is None:
        return 0
    return current_height - born


# -- validation ----------------------------------------------------------------


class TxRejected(ValueError):
    """Transaction refused; ``code`` is one of the documented rule names."""

    def __init__(self, code: str, detail: str = ""):
        self.code = code
        super().__init__(f"{code}: {detail}" if detail else code)


class BlockRejected(ValueError):
    """Block refused atomically; ``rule`` names the violated chain rule
    ((a) genesis shape, (b) signatures, (c) coverage count, (d) fee total,
    (e) funds) or a structural rule."""

    def __init__(self, rule: str, detail: str = ""):
        self.rule = rule
        super().__init__(f"condition {rule}: {detail}" if detail else rule)


def _structure_check(tx: Transaction, profile: MoneyProfile) -> None:
    if len(tx.nonce) != NONCE_LEN:
        raise TxRejected("malformed", f"nonce must be {NONCE_LEN} bytes")
    if not tx.inputs:
        raise TxRejected("malformed", "transaction needs at least one input")
    for address, amount in tx.inputs + tx.outputs:
        if len(address) != ADDRESS_LEN:
            raise TxRejected("malformed", "bad address length")
        if amount < 0:
            raise TxRejected("malformed", "negative amount")
    if tx.fee < 0:
        raise TxRejected("malformed", "negative fee")
    total_in = sum(a for _, a in tx.inputs)
    total_out = sum(a for _, a in tx.outputs)
    if total_in != total_out + tx.fee:
        raise TxRejected("malformed", "inputs must equal outputs plus fee")
    if len(tx.signatures) != len(tx.inputs):
        raise TxRejected("malformed", "one signature per input required")

    variant = tx.variant
    feature_needed = {
        Future.tag: "future",
        ConditionalFuture.tag: "conditional",
        Restitution.tag: "restitution",
        KeyDestruction.tag: "destruction",
    }.get(variant.tag)
    if feature_needed is not None and not profile.has(feature_needed):
        raise TxRejected("malformed", f"profile {profile.name!r} disables {feature_needed} transactions")
    if isinstance(variant, Future) and variant.activation_height < 0:
        raise TxRejected("malformed", "negative activation height")
    if isinstance(variant, Restitution):
        if len(tx.inputs) != 1 or len(tx.outputs) != 1:
            raise TxRejected("malformed", "restitution takes exactly one input and one output")
    if isinstance(variant, KeyDestruction):
        if tx.outputs:
            raise TxRejected("malformed", "key destruction carries no outputs")
        if len(tx.inputs) != 1:
            raise TxRejected("malformed", "key destruction takes exactly one input")
    if isinstance(variant, ConditionalFuture) and tx.inputs[0][1] < tx.fee:
        raise TxRejected("malformed", "first input of a conditional transfer must cover the fee")


def validate_transaction(
    state: LedgerState,
    tx: Transaction,
    profile: MoneyProfile,
    signer: Optional[Signer] = None,
) -> None:
    """Check a transaction against the current state; raise TxRejected if
    it cannot be admitted.

    Checks: structure and variant shape, signatures over the signing
    preimage, nonce freshness, destroyed addresses on either side, per-
    address funds (q + f <= q(a)), the fee floor (restitutions exempt),
    and the no-restitution-of-restitution rule.  Conditional-future
    transfers are exempt from the funds check at admission; only their fee
    must be covered.
    """
    signer = signer or crypto.get_signer(profile.signer)
    _structure_check(tx, profile)

    message = tx_signing_bytes(tx, profile.digest_len)
    for (address, _), sig in zip(tx.inputs, tx.signatures):
        try:
            ok = signer.verify(address, message, sig)
        except (crypto.MalformedKey, crypto.MalformedSignature) as exc:
            raise TxRejected("bad-signature", str(exc)) from exc
        if not ok:
            raise TxRejected("bad-signature", "input signature does not verify")

    if tx.nonce in state.seen_nonces:
        raise TxRejected("replayed-nonce", "nonce already used")

    for address, _ in tx.inputs:
        if address in state.destroyed:
            raise TxRejected("destroyed-address", "input address destroyed")
    for address, _ in tx.outputs:
        if address in state.destroyed:
            raise TxRejected("destroyed-address", "output address destroyed")

    if isinstance(tx.variant, Restitution):
        original = state.tx_index.get(tx.variant.original)
        if original is None:
            raise TxRejected("malformed", "restitution of unknown transaction")
        if original.kind == Restitution.tag:
            raise TxRejected("restitution-of-restitution", "originals must not be restitutions")
        if tx.outputs[0][0] != original.sender:
            raise TxRejected("malformed", "restitution must return to the original sender")
    elif tx.fee < profile.min_fee:
        raise TxRejected("fee-too-low", f"fee below minimum {profile.min_fee}")

    if isinstance(tx.variant, ConditionalFuture):
        # only the fee is due now; the transfer waits for funds
        fee_addr = tx.inputs[0][0]
        if state.balance(fee_addr) < tx.fee:
            raise TxRejected("insufficient-funds", "conditional transfer cannot cover its fee")
        return

    needed: dict[bytes, Amount] = {}
    for address, amount in tx.inputs:
        needed[address] = needed.get(address, 0) + amount
    for address, amount in needed.items():
        if state.balance(address) < amount:
            raise TxRejected("insufficient-funds", f"address holds {state.balance(address)}, needs {amount}")

    if isinstance(tx.variant, KeyDestruction):
        target = tx.inputs[0][0]
        for _, _, outs in state.pending_future:
            if any(addr == target for addr, _ in outs):
                raise TxRejected("malformed", "address still expects a future transfer")
        for ob in state.pending_conditional:
            if any(addr == target for addr, _ in ob.outputs):
                raise TxRejected("malformed", "address still expects a conditional transfer")


# -- block application -----------------------------------------------------------


def make_block_puzzle(prev: bytes, d: bytes, n: int, m: int, profile: MoneyProfile) -> Puzzle:
    """The mining problem is bound to its chain context: predecessor digest,
    miner address, coverage and difficulty all enter the seed."""
    w = Writer()
    w.u8(2)  # domain separator: puzzle seeds
    if prev:
        w.u8(1)
        w.fixed(prev, profile.digest_len)
    else:
        w.u8(0)
    w.fixed(d, ADDRESS_LEN)
    w.u64(n)
    w.u64(m)
    seed = crypto.digest(w.getvalue(), profile.digest_len)
    return crypto.make_puzzle(seed, m, n=n, alpha=profile.alpha, digest_len=profile.digest_len)


def _detect_equivocations(txs: Sequence[Transaction], digest_len: int) -> set[int]:
    """Indices of transactions forming in-block double-spend proofs: same
    first input address, same nonce, different bytes."""
    by_key: dict[tuple[bytes, bytes], list[int]] = {}
    for i, tx in enumerate(txs):
        key = (tx.inputs[0][0], tx.nonce)
        by_key.setdefault(key, []).append(i)
    voided: set[int] = set()
    for indices in by_key.values():
        if len(indices) < 2:
            continue
        distinct = {tx_bytes(txs[i], digest_len) for i in indices}
        if len(distinct) > 1:
            voided.update(indices)
    return voided


def apply_block(
    state: LedgerState,
    block: Block,
    height: int,
    profile: MoneyProfile,
    signer: Optional[Signer] = None,
) -> LedgerState:
    """Pure transition: validate the block against ``state`` and return the
    successor state; raise :class:`BlockRejected` without side effects
    otherwise.

    Order within a block: matured future outputs release first, then the
    transactions in block order (an equivocating pair voids both members,
    blocks their address and moves its funds to the penalty pool), then the
    mining credit g + h plus the penalty pool as it stood when the block
    began, and finally pending conditional transfers are re-scanned and
    effectuated while funds suffice.
    """
    signer = signer or crypto.get_signer(profile.signer)
    new = state.copy()

    if block.k != height:
        raise BlockRejected("(a)" if height == 0 else "(e)", f"sequence number {block.k}, expected {height}")
    if height == 0:
        if block.prev != GENESIS_PREV:
            raise BlockRejected("(a)", "genesis must not reference a predecessor")
        if block.txs:
            raise BlockRejected("(a)", "genesis covers no transactions")
    elif not block.prev:
        raise BlockRejected("(e)", "non-genesis block needs a predecessor digest")

    step = block.step
    pool_payout = new.penalty_pool  # pool as of block start goes to this miner
    new.penalty_pool = 0

    # release matured future transfers
    kept = []
    for activation, txid, outs in new.pending_future:
        if activation <= height:
            for address, amount in outs:
                new.balances[address] = new.balance(address) + amount
                new.last_touched[address] = height
        else:
            kept.append((activation, txid, outs))
    new.pending_future = kept

    # double-spend proofs carried by this block
    voided = _detect_equivocations(block.txs, profile.digest_len)
    if voided and not profile.has("penalties"):
        raise BlockRejected("(e)", "conflicting transactions in one block")
    message_cache: dict[int, bytes] = {}
    for i in sorted(voided):
        tx = block.txs[i]
        message = tx_signing_bytes(tx, profile.digest_len)
        for (address, _), sig in zip(tx.inputs, tx.signatures):
            if not signer.verify(address, message, sig):
                raise BlockRejected("(b)", "invalid signature on double-spend evidence")
    if voided:
        attacked: dict[bytes, Amount] = {}
        for i in voided:
            tx = block.txs[i]
            address = tx.inputs[0][0]
            claim = sum(a for _, a in tx.inputs)
            attacked[address] = max(attacked.get(address, 0), claim)
        for address, claim in attacked.items():
            seized = min(new.balance(address), claim)
            if seized:
                new.balances[address] = new.balance(address) - seized
                new.penalty_pool += seized
            new.destroyed.add(address)
            new.last_touched[address] = height

    fees_collected = 0
    for i, tx in enumerate(block.txs):
        if i in voided:
            new.seen_nonces.add(tx.nonce)  # burned either way
            continue
        try:
            validate_transaction(new, tx, profile, signer)
        except TxRejected as exc:
            rule = "(b)" if exc.code == "bad-signature" else "(e)"
            raise BlockRejected(rule, str(exc)) from exc
        _apply_transaction(new, tx, height, profile)
        fees_collected += tx.fee

    if step.n != len(block.txs):
        raise BlockRejected("(c)", f"step covers {step.n} transactions, block carries {len(block.txs)}")
    if step.g != fees_collected:
        raise BlockRejected("(d)", f"step claims {step.g} in fees, transactions pay {fees_collected}")
    expected_yield = block_yield(profile, height)
    if step.h != expected_yield:
        raise BlockRejected("yield", f"step creates {step.h}, schedule allows {expected_yield}")
    puzzle = make_block_puzzle(block.prev, step.d, step.n, step.m, profile)
    if puzzle != step.puzzle:
        raise BlockRejected("puzzle", "mining problem does not match chain context")
    if not crypto.check(puzzle, step.s):
        raise BlockRejected("puzzle", "solution does not solve the mining problem")
    if step.d in new.destroyed:
        raise BlockRejected("(e)", "miner address destroyed")
    if not signer.verify(step.d, block_signing_bytes(block, profile.digest_len), block.miner_sig):
        raise BlockRejected("(b)", "miner signature does not verify")

    new.balances[step.d] = new.balance(step.d) + step.g + step.h + pool_payout
    new.minted_total += step.h
    new.last_touched[step.d] = height

    _run_conditional_scan(new, height)
    return new


def _apply_transaction(state: LedgerState, tx: Transaction, height: int, profile: MoneyProfile) -> None:
    txid = tx_id(tx, profile.digest_len)
    state.seen_nonces.add(tx.nonce)
    state.tx_index[txid] = TxRecord(sender=tx.inputs[0][0], kind=tx.variant.tag, received=tx.outputs)

    if isinstance(tx.variant, ConditionalFuture):
        fee_addr = tx.inputs[0][0]
        state.balances[fee_addr] = state.balance(fee_addr) - tx.fee
        state.last_touched[fee_addr] = height
        # the fee came out of the first declared input; the rest waits for funds
        required = []
        for i, (address, amount) in enumerate(tx.inputs):
            remaining = amount - tx.fee if i == 0 else amount
            if remaining:
                required.append((address, remaining))
        state.pending_conditional.append(
            ConditionalObligation(txid=txid, required=tuple(required), outputs=tx.outputs, admitted_height=height)
        )
        return

    for address, amount in tx.inputs:
        state.balances[address] = state.balance(address) - amount
        state.last_touched[address] = height

    if isinstance(tx.variant, Future):
        state.pending_future.append((tx.variant.activation_height, txid, tx.outputs))
        for address, _ in tx.outputs:
            state.last_touched[address] = height
    elif isinstance(tx.variant, KeyDestruction):
        target = tx.inputs[0][0]
        residue = state.balance(target)
        state.balances[target] = 0
        state.destroyed_total += residue
        state.destroyed.add(target)
    else:
        for address, amount in tx.outputs:
            state.balances[address] = state.balance(address) + amount
            state.last_touched[address] = height


def _run_conditional_scan(state: LedgerState, height: int) -> None:
    """Effectuate pending conditional transfers, oldest first, repeating
    until a pass makes no progress (one effectuation can fund the next)."""
    progressed = True
    while progressed and state.pending_conditional:
        progressed = False
        remaining: list[ConditionalObligation] = []
        for ob in state.pending_conditional:
            needed: dict[bytes, Amount] = {}
            for address, amount in ob.required:
                needed[address] = needed.get(address, 0) + amount
            if all(state.balance(a) >= amt for a, amt in needed.items()):
                for address, amount in ob.required:
                    state.balances[address] = state.balance(address) - amount
                    state.last_touched[address] = height
                for address, amount in ob.outputs:
                    state.balances[address] = state.balance(address) + amount
                    state.last_touched[address] = height
                progressed = True
            else:
                remaining.append(ob)
        state.pending_conditional = remaining


def admit_transaction(
    state: LedgerState,
    tx: Transaction,
    height: int,
    profile: MoneyProfile,
    signer: Optional[Signer] = None,
) -> None:
    """Validate ``tx`` against ``state`` and apply it in place.

    Used by block builders to fold a candidate transaction list into a trial
    state; raises :class:`TxRejected` and leaves ``state`` unchanged on
    refusal.
    """
    signer = signer or crypto.get_signer(profile.signer)
    validate_transaction(state, tx, profile, signer)
    _apply_transaction(state, tx, height, profile)


# -- construction helpers ---------------------------------------------------------


def build_transaction(
    inputs: Sequence[tuple["crypto.KeyPair", Amount]],
    outputs: Sequence[tuple[bytes, Amount]],
    fee: Amount,
    nonce: bytes,
    profile: MoneyProfile,
    variant: Variant = Ordinary(),
    signer: Optional[Signer] = None,
) -> Transaction:
    """Assemble and sign a transaction from keypairs for the inputs."""
    signer = signer or crypto.get_signer(profile.signer)
    tx = Transaction(
        nonce=nonce,
        inputs=tuple((kp.address, amount) for kp, amount in inputs),
        outputs=tuple(outputs),
        fee=fee,
        variant=variant,
        signatures=(),
    )
    message = tx_signing_bytes(tx, profile.digest_len)
    sigs = tuple(signer.sign(kp.secret, message) for kp, _ in inputs)
    return replace(tx, signatures=sigs)


def build_block(
    prev: bytes,
    height: int,
    txs: Sequence[Transaction],
    miner: "crypto.KeyPair",
    state: LedgerState,
    profile: MoneyProfile,
    m: Optional[int] = None,
    signer: Optional[Signer] = None,
    solve_budget: int = 1 << 22,
    solution: Optional[bytes] = None,
) -> Block:
    """Assemble, solve, and sign a block extending ``prev`` at ``height``.

    A caller who already searched the puzzle may pass its ``solution``."""
    signer = signer or crypto.get_signer(profile.signer)
    txs = tuple(txs)
    m = profile.default_difficulty if m is None else m
    voided = _detect_equivocations(txs, profile.digest_len)
    g = sum(tx.fee for i, tx in enumerate(txs) if i not in voided)
    h = block_yield(profile, height)
    puzzle = make_block_puzzle(prev, miner.address, len(txs), m, profile)
    s = solution if solution is not None else crypto.solve(puzzle, solve_budget)
    step = MiningStep(d=miner.address, n=len(txs), m=m, g=g, h=h, puzzle=puzzle, s=s)
    unsigned = Block(k=height, prev=prev, txs=txs, step=step, miner_sig=b"")
    sig = signer.sign(miner.secret, block_signing_bytes(unsigned, profile.digest_len))
    return replace(unsigned, miner_sig=sig)
