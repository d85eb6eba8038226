"""Randomized valid-chain generator for replay and conservation testing.

Generates block sequences exercising the whole feature mix: plain
transfers, future and conditional transfers, restitutions, key
destruction, and double-spend evidence pairs.  Alongside each valid
block it also probes invalid moves (overspends, nonce replays) to make
sure they are refused.
"""

import random
from dataclasses import dataclass, field

from bitguilder import crypto, ledger
from bitguilder.profiles import MoneyProfile, get_profile


@dataclass
class TraceContext:
    profile: MoneyProfile
    signer: object
    rng: random.Random
    keys: list = field(default_factory=list)
    blocks: list = field(default_factory=list)
    states: list = field(default_factory=list)  # state after each block
    restitutables: list = field(default_factory=list)  # (txid, sender_address)
    rejected_probes: int = 0

    @property
    def state(self) -> ledger.LedgerState:
        return self.states[-1] if self.states else ledger.LedgerState()

    def nonce(self) -> bytes:
        return self.rng.getrandbits(128).to_bytes(16, "big")

    def live_keys(self):
        return [kp for kp in self.keys if kp.address not in self.state.destroyed]

    def funded_keys(self, minimum=1):
        return [kp for kp in self.live_keys() if self.state.balance(kp.address) >= minimum]


def _tx_transfer(ctx: TraceContext, trial: ledger.LedgerState, variant_kind: str):
    rng = ctx.rng
    candidates = [kp for kp in ctx.live_keys() if trial.balance(kp.address) >= 2 + ctx.profile.min_fee]
    if not candidates:
        return None
    sender = rng.choice(candidates)
    receiver = rng.choice(ctx.live_keys())
    balance = trial.balance(sender.address)
    fee = max(ctx.profile.min_fee, rng.randint(0, 2))
    amount = rng.randint(1, max(1, (balance - fee) // 2))
    if variant_kind == "future":
        variant = ledger.Future(len(ctx.blocks) + rng.randint(1, 4))
    elif variant_kind == "conditional":
        # declared inputs may exceed the balance; only the fee must be covered
        amount = rng.randint(balance, balance * 2 + 5)
        variant = ledger.ConditionalFuture()
    else:
        variant = ledger.Ordinary()
    tx = ledger.build_transaction(
        [(sender, amount + fee)], [(receiver.address, amount)], fee, ctx.nonce(),
        ctx.profile, variant, ctx.signer,
    )
    return tx


def _tx_restitution(ctx: TraceContext, trial: ledger.LedgerState):
    rng = ctx.rng
    options = [
        (txid, sender)
        for txid, sender in ctx.restitutables
        if txid in trial.tx_index and trial.tx_index[txid].kind != ledger.Restitution.tag
    ]
    if not options:
        return None
    txid, original_sender = rng.choice(options)
    record = trial.tx_index[txid]
    returners = [kp for kp in ctx.live_keys() if kp.address != original_sender
                 and trial.balance(kp.address) >= 1 and original_sender not in trial.destroyed]
    if not returners or original_sender in trial.destroyed:
        return None
    sender = rng.choice(returners)
    amount = rng.randint(1, trial.balance(sender.address))
    return ledger.build_transaction(
        [(sender, amount)], [(record.sender, amount)], 0, ctx.nonce(),
        ctx.profile, ledger.Restitution(txid), ctx.signer,
    )


def _tx_destruction(ctx: TraceContext, trial: ledger.LedgerState):
    rng = ctx.rng
    pending_targets = {a for _, _, outs in trial.pending_future for a, _ in outs}
    pending_targets |= {a for ob in trial.pending_conditional for a, _ in ob.outputs}
    options = [
        kp for kp in ctx.live_keys()
        if trial.balance(kp.address) >= 1 and kp.address not in pending_targets
    ]
    if len(options) < 2 or len(ctx.live_keys()) < 3:
        return None
    victim = rng.choice(options)
    fee = min(1, trial.balance(victim.address))
    return ledger.build_transaction(
        [(victim, fee)], [], fee, ctx.nonce(), ctx.profile, ledger.KeyDestruction(), ctx.signer,
    )


def _equivocation_pair(ctx: TraceContext, trial: ledger.LedgerState):
    rng = ctx.rng
    candidates = [kp for kp in ctx.live_keys() if trial.balance(kp.address) >= 4]
    spenders = [kp for kp in candidates]
    if not spenders:
        return None
    sender = rng.choice(spenders)
    others = [kp for kp in ctx.live_keys() if kp.address != sender.address]
    if len(others) < 2:
        return None
    nonce = ctx.nonce()
    amount = trial.balance(sender.address) - 1
    tx_a = ledger.build_transaction(
        [(sender, amount + 1)], [(others[0].address, amount)], 1, nonce, ctx.profile,
        signer=ctx.signer,
    )
    tx_b = ledger.build_transaction(
        [(sender, amount + 1)], [(others[1].address, amount)], 1, nonce, ctx.profile,
        signer=ctx.signer,
    )
    return tx_a, tx_b


def _probe_invalid(ctx: TraceContext, trial: ledger.LedgerState):
    """Try an overspend or nonce replay; it must be refused."""
    rng = ctx.rng
    funded = [kp for kp in ctx.live_keys() if trial.balance(kp.address) >= 1]
    if not funded:
        return
    sender = rng.choice(funded)
    receiver = rng.choice(ctx.live_keys())
    if rng.random() < 0.5:
        amount = trial.balance(sender.address) + rng.randint(1, 100)
        tx = ledger.build_transaction(
            [(sender, amount)], [(receiver.address, amount)], 0, ctx.nonce(),
            ctx.profile, signer=ctx.signer,
        )
        expected = "insufficient-funds"
    else:
        used = rng.choice(sorted(trial.seen_nonces)) if trial.seen_nonces else None
        if used is None:
            return
        amount = min(1, trial.balance(sender.address))
        tx = ledger.build_transaction(
            [(sender, amount)], [(receiver.address, amount)], 0, used,
            ctx.profile, signer=ctx.signer,
        )
        expected = "replayed-nonce"
    try:
        ledger.validate_transaction(trial, tx, ctx.profile, ctx.signer)
    except ledger.TxRejected as exc:
        assert exc.code == expected, f"probe expected {expected}, got {exc.code}"
        ctx.rejected_probes += 1
    else:  # pragma: no cover - would be a validation hole
        raise AssertionError(f"invalid probe ({expected}) was accepted")


def generate_trace(seed: int, n_blocks: int = 10, n_keys: int = 5, profile=None, probe=True) -> TraceContext:
    """Build a random valid chain; returns blocks, per-height states, keys."""
    profile = profile or get_profile("desk")
    signer = crypto.get_signer(profile.signer)
    rng = random.Random(seed)
    ctx = TraceContext(profile=profile, signer=signer, rng=rng)
    ctx.keys = [signer.gen_keypair(rng) for _ in range(n_keys)]

    for height in range(n_blocks):
        trial = ctx.state.copy()
        txs = []
        blocked_now: set[bytes] = set()
        for _ in range(rng.randint(0, 3)):
            kind = rng.choices(
                ["ordinary", "future", "conditional", "restitution", "destruction", "equivocation"],
                weights=[50, 12, 10, 10, 4, 8],
            )[0]
            built = None
            if kind == "equivocation" and profile.has("penalties") and not txs:
                pair = _equivocation_pair(ctx, trial)
                if pair is not None:
                    txs.extend(pair)
                    # evidence processing blocks the equivocator up front, so
                    # nothing else may share a block with the pair
                    blocked_now.add(pair[0].inputs[0][0])
                    break
                continue
            if kind == "ordinary":
                built = _tx_transfer(ctx, trial, "ordinary")
            elif kind == "future" and profile.has("future"):
                built = _tx_transfer(ctx, trial, "future")
            elif kind == "conditional" and profile.has("conditional"):
                built = _tx_transfer(ctx, trial, "conditional")
            elif kind == "restitution" and profile.has("restitution"):
                built = _tx_restitution(ctx, trial)
            elif kind == "destruction" and profile.has("destruction"):
                built = _tx_destruction(ctx, trial)
            if built is None:
                continue
            if any(t.nonce == built.nonce for t in txs):
                continue
            try:
                ledger.admit_transaction(trial, built, height, profile, signer)
            except ledger.TxRejected:
                continue
            txs.append(built)
            if isinstance(built.variant, ledger.Ordinary):
                ctx.restitutables.append((ledger.tx_id(built, profile.digest_len), built.inputs[0][0]))
        if probe and ctx.states:
            _probe_invalid(ctx, ctx.state.copy())

        eligible_miners = [
            kp for kp in ctx.live_keys()
            if kp.address not in blocked_now and kp.address not in trial.destroyed
        ]
        miner = rng.choice(eligible_miners)
        prev = ledger.block_id(ctx.blocks[-1], profile.digest_len) if ctx.blocks else b""
        block = ledger.build_block(prev, height, txs, miner, ctx.state, profile, signer=signer)
        new_state = ledger.apply_block(ctx.state, block, height, profile, signer)
        ctx.blocks.append(block)
        ctx.states.append(new_state)
    return ctx


def replay_from_genesis(ctx: TraceContext) -> ledger.LedgerState:
    """Independent full replay: fold every stored block over a fresh state."""
    state = ledger.LedgerState()
    for height, block in enumerate(ctx.blocks):
        state = ledger.apply_block(state, block, height, ctx.profile, ctx.signer)
    return state
