"""Dual-money layer: a managed near-money beside the access-only coin,
an exchange market between the two, interest-free loans, and public
policy announcements.

The near-money runs on the same ledger engine under a ``tim`` profile
whose supply a governor may adjust; the access-only profile admits no
such operation, and every balance there moves only through signed
transactions inside blocks.  Loans exist only in the near-money: the
redemption amount is principal plus fee exactly, and a default produces
an event, never a forced transfer.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional, Sequence

from . import crypto, ledger
from .consensus import ChainView
from .meadow import RAT_ONE, RAT_ZERO, Rat
from .profiles import MoneyProfile, get_profile
from .promises import (
    AcceptsTransfers,
    ConditionConfirmed,
    Promise,
    PromiseRegistry,
    SatisfiesCondition,
)
from .units import Quantity

__all__ = [
    "MoneyProfile",
    "ProfileForbids",
    "NegativeSupply",
    "ExchangeError",
    "managed_issue",
    "IssueEvent",
    "ExchangeMarket",
    "ExchangeResult",
    "ChainHarness",
    "DualSystem",
    "exchange",
    "Loan",
    "LoanOutcome",
    "loan_lifecycle",
    "policy_announce",
    "policy_audit_events",
    "incoming_transfer_flags",
    "POLICY_KINDS",
]


class ProfileForbids(PermissionError):
    pass


class NegativeSupply(ValueError):
    pass


class ExchangeError(ValueError):
    def __init__(self, code: str, detail: str = ""):
        self.code = code
        super().__init__(f"{code}: {detail}" if detail else code)


# -- managed supply --------------------------------------------------------------


@dataclass(frozen=True)
class IssueEvent:
    delta: int
    rationale: str
    supply_after: int


def managed_issue(
    state: ledger.LedgerState,
    profile: MoneyProfile,
    delta: int,
    rationale: str,
    governor: bytes,
) -> tuple[ledger.LedgerState, IssueEvent]:
    """Adjust the near-money supply by ``delta`` quanta at the governor
    address.  Forbidden on access-only profiles; contractions must not
    push the supply or the governor's balance below zero."""
    if profile.policy == "exim" or not profile.managed_supply:
        raise ProfileForbids(f"profile {profile.name!r} admits no administrative issuance")
    new = state.copy()
    if delta >= 0:
        new.balances[governor] = new.balance(governor) + delta
        new.minted_total += delta
    else:
        shrink = -delta
        if new.balance(governor) < shrink:
            raise NegativeSupply("governor balance cannot absorb the contraction")
        supply = new.minted_total - new.destroyed_total
        if supply < shrink:
            raise NegativeSupply("supply would turn negative")
        new.balances[governor] = new.balance(governor) - shrink
        new.destroyed_total += shrink
    supply_after = new.minted_total - new.destroyed_total
    return new, IssueEvent(delta=delta, rationale=rationale, supply_after=supply_after)


# -- exchange market --------------------------------------------------------------


@dataclass(frozen=True)
class ExchangeResult:
    direction: str
    executed_source: int   # quanta on the source chain
    executed_target: int   # quanta on the target chain
    remainder: int         # unconverted source quanta (lattice rounding)
    rate: Rat
    time: Rat


class ExchangeMarket:
    """Exogenous near-money-per-coin rate path plus an order log.

    The path is a step function from either explicit (time, rate) points
    or a seeded multiplicative walk; rates are exact and positive.
    """

    def __init__(self, path: Sequence[tuple[Rat, Rat]]):
        if not path:
            raise ExchangeError("no-rate", "empty rate path")
        self.path = sorted(((Rat(t) if isinstance(t, int) else t), r) for t, r in path)
        for _, rate in self.path:
            if rate <= 0:
                raise ExchangeError("no-rate", "rates must be positive")
        self.orders: list[ExchangeResult] = []

    @classmethod
    def fixed(cls, rate: Rat) -> "ExchangeMarket":
        return cls([(RAT_ZERO, rate)])

    @classmethod
    def seeded_walk(cls, seed: int, start: Rat, steps: int, dt: Rat = RAT_ONE, volatility: Rat = Rat(1, 16)) -> "ExchangeMarket":
        rng = random.Random(seed)
        t = RAT_ZERO
        rate = start
        path = [(t, rate)]
        for _ in range(steps):
            t = t + dt
            swing = Rat(rng.getrandbits(16), 1 << 15) - RAT_ONE  # exact in [-1, 1)
            rate = rate * (RAT_ONE + volatility * swing)
            path.append((t, rate))
        return cls(path)

    def rate_at(self, t: Rat) -> Rat:
        if isinstance(t, int):
            t = Rat(t)
        current = None
        for step_time, rate in self.path:
            if step_time <= t:
                current = rate
            else:
                break
        if current is None:
            raise ExchangeError("no-rate", f"no rate defined at time {t}")
        return current


# -- single-miner chain harness -----------------------------------------------------


class ChainHarness:
    """One chain driven by a single housekeeping miner; used by the dual
    system, fixtures and the CLI scenario helpers."""

    def __init__(self, profile: MoneyProfile, rng: random.Random):
        self.profile = profile
        self.signer = crypto.get_signer(profile.signer)
        self.rng = rng
        self.view = ChainView(profile, self.signer)
        self.miner = self.signer.gen_keypair(rng)
        self.mine()  # genesis

    def mine(self, txs: Sequence[ledger.Transaction] = ()) -> None:
        block = ledger.build_block(
            self.view.tip_id, len(self.view), txs, self.miner, self.view.state, self.profile, signer=self.signer
        )
        self.view.append(block)

    @property
    def state(self) -> ledger.LedgerState:
        return self.view.state

    def balance(self, address: bytes) -> int:
        return self.state.balance(address)

    def nonce(self) -> bytes:
        return self.rng.getrandbits(8 * crypto.NONCE_LEN).to_bytes(crypto.NONCE_LEN, "big")

    def transfer(
        self,
        sender: crypto.KeyPair,
        outputs: Sequence[tuple[bytes, int]],
        fee: Optional[int] = None,
        variant: ledger.Variant = ledger.Ordinary(),
    ) -> bytes:
        fee = self.profile.min_fee if fee is None else fee
        total = sum(a for _, a in outputs) + fee
        tx = ledger.build_transaction(
            [(sender, total)], outputs, fee, self.nonce(), self.profile, variant, self.signer
        )
        self.mine([tx])
        return ledger.tx_id(tx, self.profile.digest_len)

    def grant(self, address: bytes, amount: int) -> None:
        """Move mined funds to an address, mining as needed to cover it."""
        guard = 0
        while self.balance(self.miner.address) < amount + self.profile.min_fee:
            self.mine()
            guard += 1
            if guard > 10_000:
                raise RuntimeError("yield schedule exhausted before the grant was covered")
        self.transfer(self.miner, [(address, amount)])


class DualSystem:
    """The access-only coin and its managed near-money, with agents
    holding keys on both chains and a market maker in the middle."""

    def __init__(
        self,
        coin_profile: Optional[MoneyProfile] = None,
        near_profile: Optional[MoneyProfile] = None,
        seed: int = 0,
    ):
        self.rng = random.Random(seed)
        self.coin = ChainHarness(coin_profile or get_profile("desk"), self.rng)
        self.near = ChainHarness(near_profile or get_profile("nmcoin"), self.rng)
        self.coin_keys: dict[str, crypto.KeyPair] = {}
        self.near_keys: dict[str, crypto.KeyPair] = {}
        self.new_agent("market")
        self.governor = self.near.signer.gen_keypair(self.rng)

    def new_agent(self, name: str) -> None:
        self.coin_keys[name] = self.coin.signer.gen_keypair(self.rng)
        self.near_keys[name] = self.near.signer.gen_keypair(self.rng)

    def coin_balance(self, name: str) -> int:
        return self.coin.balance(self.coin_keys[name].address)

    def near_balance(self, name: str) -> int:
        return self.near.balance(self.near_keys[name].address)

    def fund_coin(self, name: str, amount: int) -> None:
        self.coin.grant(self.coin_keys[name].address, amount)

    def fund_near(self, name: str, amount: int) -> None:
        self.near.grant(self.near_keys[name].address, amount)

    def issue_near(self, delta: int, rationale: str) -> IssueEvent:
        # issuance happens off-block at the governor address, then circulates
        new_state, event = managed_issue(self.near.state, self.near.profile, delta, rationale, self.governor.address)
        self.near.view.states[-1] = new_state
        return event

    def governor_grant(self, name: str, amount: int) -> None:
        self.near.transfer(self.governor, [(self.near_keys[name].address, amount)], fee=self.near.profile.min_fee)


def _conversion_step(quantum_source: Rat, quantum_target: Rat, rate: Rat) -> Rat:
    """Target quanta per source quantum, as an exact ratio."""
    return quantum_source * rate / quantum_target


def exchange(
    dual: DualSystem,
    market: ExchangeMarket,
    agent: str,
    amount: int,
    direction: str,
    t: Rat,
) -> ExchangeResult:
    """Convert ``amount`` source quanta at the posted rate, exactly.

    Conversion happens on the largest sub-amount whose target value is a
    whole number of target quanta (the remainder is left untouched), so
    the value identity source * quantum * rate == target * quantum holds
    exactly.  Both legs are ordinary on-chain transactions; the agent
    bears the target-leg fee.
    """
    rate = market.rate_at(t)
    if direction == "coin->near":
        src, tgt = dual.coin, dual.near
        src_keys, tgt_keys = dual.coin_keys, dual.near_keys
        factor = _conversion_step(src.profile.quantum, tgt.profile.quantum, rate)
    elif direction == "near->coin":
        src, tgt = dual.near, dual.coin
        src_keys, tgt_keys = dual.near_keys, dual.coin_keys
        factor = _conversion_step(src.profile.quantum, tgt.profile.quantum, rate.inverse())
    else:
        raise ExchangeError("malformed", f"unknown direction {direction!r}")

    lattice = factor.den  # source quanta must come in multiples of this
    executed_source = (amount // lattice) * lattice
    if executed_source <= 0:
        raise ExchangeError("insufficient-funds", "amount below the exact-conversion step")
    target_quanta = executed_source * factor.num // factor.den
    source_fee = src.profile.min_fee
    target_fee = tgt.profile.min_fee

    agent_src = src_keys[agent]
    if src.balance(agent_src.address) < executed_source + source_fee:
        raise ExchangeError("insufficient-funds", "agent cannot cover the source leg")
    market_tgt = tgt_keys["market"]
    if tgt.balance(market_tgt.address) < target_quanta:
        raise ExchangeError("insufficient-funds", "market reserves cannot cover the target leg")
    if target_quanta <= target_fee:
        raise ExchangeError("insufficient-funds", "conversion too small to cover the target-leg fee")

    src.transfer(agent_src, [(src_keys["market"].address, executed_source)], fee=source_fee)
    tgt.transfer(market_tgt, [(tgt_keys[agent].address, target_quanta - target_fee)], fee=target_fee)

    result = ExchangeResult(
        direction=direction,
        executed_source=executed_source,
        executed_target=target_quanta,
        remainder=amount - executed_source,
        rate=rate,
        time=t if isinstance(t, Rat) else Rat(t),
    )
    market.orders.append(result)
    return result


# -- interest-free loans -------------------------------------------------------------


@dataclass(frozen=True)
class Loan:
    lender: str
    borrower: str
    principal: int      # near-money quanta
    fee: int            # near-money quanta, fixed when the loan opens
    open_time: Rat
    term: Rat

    @property
    def redemption(self) -> int:
        return self.principal + self.fee

    @property
    def close_time(self) -> Rat:
        return self.open_time + self.term


@dataclass
class LoanOutcome:
    loan: Loan
    events: list
    redeemed: bool
    pnl_coin: Quantity  # lender profit and loss, coin-denominated


def loan_lifecycle(
    dual: DualSystem,
    market: ExchangeMarket,
    loan: Loan,
    chain_fees: bool = False,
) -> LoanOutcome:
    """Open and settle a loan in the near-money; the lender's profit is
    measured in the coin via the rates at open and close.

    The lender hands the principal to the borrower at the open time; at
    close the borrower redeems principal plus fee exactly, or, lacking
    funds, a default event is recorded and nothing moves (a promise not
    kept creates no obligation anyone could enforce).
    """
    events: list = []
    near = dual.near
    fee = near.profile.min_fee if chain_fees else 0
    lender_key = dual.near_keys[loan.lender]
    borrower_key = dual.near_keys[loan.borrower]

    if near.balance(lender_key.address) < loan.principal + fee:
        raise ExchangeError("insufficient-funds", "lender does not hold the principal")
    near.transfer(lender_key, [(borrower_key.address, loan.principal)], fee=fee)
    events.append({"event": "open", "time": str(loan.open_time), "amount": loan.principal})

    redeemed = False
    if near.balance(borrower_key.address) >= loan.redemption + fee:
        near.transfer(borrower_key, [(lender_key.address, loan.redemption)], fee=fee)
        events.append({"event": "redeem", "time": str(loan.close_time), "amount": loan.redemption})
        redeemed = True
    else:
        events.append({"event": "default", "time": str(loan.close_time)})

    rate_open = market.rate_at(loan.open_time)
    rate_close = market.rate_at(loan.close_time)
    principal_units = Rat(loan.principal) * near.profile.quantum
    if redeemed:
        redemption_units = Rat(loan.redemption) * near.profile.quantum
        pnl_value = redemption_units / rate_close - principal_units / rate_open
    else:
        pnl_value = RAT_ZERO - principal_units / rate_open
    pnl = Quantity(pnl_value, dual.coin.profile.dimension)
    return LoanOutcome(loan=loan, events=events, redeemed=redeemed, pnl_coin=pnl)


# -- policy announcements --------------------------------------------------------------

POLICY_KINDS = (
    "restitution-policy",
    "gift-account",
    "publish-outgoing",
    "publish-outgoing-reserved",
    "publish-incoming",
    "publish-restitutions",
    "publish-control-claims",
    "prove-control-for-fee",
    "publish-lost-control",
    "publish-shared-control",
    "estate-policy",
)


def policy_announce(
    registry: PromiseRegistry,
    agent: str,
    items: Sequence[dict],
) -> list[int]:
    """Publish policy items as promises scoped to the whole population.

    A ``gift-account`` item announces one of the agent's own addresses as
    a pay-in point; every other policy kind becomes a named behavioral
    commitment whose keeping the policy audit judges later.
    """
    ids = []
    population = registry.population
    for item in items:
        kind = item["kind"]
        if kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {kind!r}")
        if kind == "gift-account":
            body = AcceptsTransfers(address=bytes.fromhex(item["address"]), own_account=True)
        else:
            body = SatisfiesCondition(condition=f"policy:{kind}")
        ids.append(registry.declare(Promise(agent, population, population, body)))
    return ids


def policy_audit_events(
    registry: PromiseRegistry,
    view: ChainView,
    agent: str,
    agent_addresses: Sequence[bytes],
    final_time: Rat,
) -> list[ConditionConfirmed]:
    """Judge announced behavioral policies against the chain.

    Currently audited: ``publish-outgoing`` (every outgoing transaction
    from the agent's addresses must have a matching publication recorded
    in the registry).  Returns condition events to feed ``observe``."""
    events: list[ConditionConfirmed] = []
    addresses = set(agent_addresses)
    has_policy = any(
        isinstance(p.body, SatisfiesCondition)
        and p.body.condition == "policy:publish-outgoing"
        and p.promiser == agent
        for p in registry.promises()
    )
    if has_policy:
        violations = 0
        for block in view.blocks:
            for tx in block.txs:
                if tx.inputs[0][0] in addresses and not isinstance(tx.variant, ledger.KeyDestruction):
                    txid = ledger.tx_id(tx, view.profile.digest_len)
                    if not registry.was_published(agent, txid):
                        violations += 1
        events.append(ConditionConfirmed(final_time, agent, "policy:publish-outgoing", violations == 0))
    return events


@dataclass(frozen=True)
class TransferFlag:
    txid: bytes
    to_address: bytes
    from_address: bytes
    reason: str


def incoming_transfer_flags(
    registry: PromiseRegistry,
    view: ChainView,
    known_senders: dict[bytes, str],
) -> list[TransferFlag]:
    """Flag confirmed incoming transfers whose sender no one can name,
    except those into addresses declared as gift accounts."""
    gift_addresses = {
        p.body.address
        for p in registry.promises()
        if isinstance(p.body, AcceptsTransfers) and p.body.own_account
    }
    flags = []
    for block in view.blocks:
        for tx in block.txs:
            sender = tx.inputs[0][0]
            if sender in known_senders:
                continue
            txid = ledger.tx_id(tx, view.profile.digest_len)
            for to_address, _ in tx.outputs:
                if to_address in gift_addresses:
                    continue
                flags.append(
                    TransferFlag(txid=txid, to_address=to_address, from_address=sender, reason="anonymous-sender")
                )
    return flags
