"""Valuation, wealth, taxation, confirmed-access closure, mining business
cases, and the expected-unit-value estimator, all over exact quantities.

Wealth sums an agent's accessible balances with shared accounts divided
by the number of agents having access, so the per-agent wealths of a
population add up exactly to the total accessible amount.  The confirmed
variant replaces raw access with the least fixpoint of two rules: an
agent counts as confirmed on an address after confirming and
demonstrating access, and sharing assertions propagate confirmation only
from already-confirmed agents.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import FrozenSet, Iterable, Optional

from .ledger import LedgerState
from .meadow import RAT_ZERO, Rat
from .profiles import MoneyProfile
from .units import Dimension, DimensionMismatch, Quantity

__all__ = [
    "SelfConfirmation",
    "Demonstration",
    "SharedAssertion",
    "AccessRelation",
    "c_access_closure",
    "valuation",
    "wealth1",
    "wealth2",
    "taxation",
    "BusinessCaseReport",
    "business_case",
    "operating_case",
    "replacement_same_case",
    "replacement_improved_case",
    "mining_productivity",
    "expected_value",
]

UNIT_OF_ACCOUNT_SUFFIX = "A"    # BGU -> BGUA
FORMAL_PREFIX = "F"             # BGU -> FBGU, BGUA -> FBGUA


# -- access assertions ----------------------------------------------------------


@dataclass(frozen=True)
class SelfConfirmation:
    """Agent confirmed, upon request, having had access to the address."""

    agent: str
    address: bytes


@dataclass(frozen=True)
class Demonstration:
    """Agent demonstrated access to the address (e.g. answered a signed
    challenge from it)."""

    agent: str
    address: bytes


@dataclass(frozen=True)
class SharedAssertion:
    """``by`` asserted having shared access to the address with ``with_agent``."""

    by: str
    with_agent: str
    address: bytes


Assertion = SelfConfirmation | Demonstration | SharedAssertion


class AccessRelation:
    """Set of (agent, address) access pairs at one point in time."""

    def __init__(self, pairs: Iterable[tuple[str, bytes]] = ()):
        self._pairs = frozenset(pairs)

    def has(self, agent: str, address: bytes) -> bool:
        return (agent, address) in self._pairs

    def addresses_of(self, agent: str) -> frozenset:
        return frozenset(address for a, address in self._pairs if a == agent)

    def holders_of(self, address: bytes) -> frozenset:
        return frozenset(agent for agent, a in self._pairs if a == address)

    def agents(self) -> frozenset:
        return frozenset(agent for agent, _ in self._pairs)

    def pairs(self) -> frozenset:
        return self._pairs

    def __eq__(self, other):
        if not isinstance(other, AccessRelation):
            return NotImplemented
        return self._pairs == other._pairs

    def __len__(self):
        return len(self._pairs)


def c_access_closure(assertions: Iterable[Assertion]) -> AccessRelation:
    """Confirmed access: the least fixpoint of the two admission rules.

    An agent is confirmed on an address once it both confirmed and
    demonstrated access; a sharing assertion confirms its other party
    only when the asserting agent is itself already confirmed.  The
    closure takes the assertions at face value; lies and omissions pass
    through as stated.
    """
    assertions = list(assertions)
    confirmed: set[tuple[str, bytes]] = set()
    said = {(a.agent, a.address) for a in assertions if isinstance(a, SelfConfirmation)}
    shown = {(a.agent, a.address) for a in assertions if isinstance(a, Demonstration)}
    confirmed |= said & shown

    shares = [a for a in assertions if isinstance(a, SharedAssertion)]
    changed = True
    while changed:
        changed = False
        for share in shares:
            if (share.by, share.address) in confirmed and (share.with_agent, share.address) not in confirmed:
                confirmed.add((share.with_agent, share.address))
                changed = True
    return AccessRelation(confirmed)


# -- valuation and wealth ----------------------------------------------------------


def _account_unit(profile: MoneyProfile, formal: bool = False) -> Dimension:
    symbol = profile.unit + UNIT_OF_ACCOUNT_SUFFIX
    if formal:
        symbol = FORMAL_PREFIX + symbol
    return Dimension.base(symbol)


def valuation(amount: Quantity | Rat, profile: MoneyProfile) -> Quantity:
    """Map a coin quantity to the numerically equal quantity in the unit
    of account.  Hypothetical values beyond the circulation bound (or
    negative ones) are fine; valuation talks about worth, not holdings."""
    if isinstance(amount, Quantity):
        if amount.dim != profile.dimension:
            raise DimensionMismatch(profile.dimension, amount.dim, "valuation input")
        value = amount.value
    else:
        value = amount
    return Quantity(value, _account_unit(profile))


def _wealth_sum(agent: str, ledger_state: LedgerState, access: AccessRelation, profile: MoneyProfile) -> Rat:
    total = RAT_ZERO
    for address in sorted(access.addresses_of(agent)):
        holders = access.holders_of(address)
        if not holders:
            continue
        amount_units = Rat(ledger_state.balance(address)) * profile.quantum
        total = total + amount_units / Rat(len(holders))
    return total


def wealth1(agent: str, ledger_state: LedgerState, access: AccessRelation, profile: MoneyProfile) -> Quantity:
    """Account-unit wealth: accessible balances, each divided by how many
    agents share access to that address (the agent included)."""
    return Quantity(_wealth_sum(agent, ledger_state, access, profile), _account_unit(profile))


def wealth2(
    agent: str,
    ledger_state: LedgerState,
    assertions: Iterable[Assertion],
    profile: MoneyProfile,
) -> Quantity:
    """The same sum over confirmed access, in the formal unit of account."""
    access = c_access_closure(assertions)
    return Quantity(_wealth_sum(agent, ledger_state, access, profile), _account_unit(profile, formal=True))


def taxation(agent: str, ledger_state: LedgerState, access: AccessRelation, profile: MoneyProfile) -> Quantity:
    """Announced yearly levy: exactly one hundredth of the agent's wealth,
    stated in formal coin units (a planned transfer, not an executed one)."""
    value = _wealth_sum(agent, ledger_state, access, profile) / Rat(100)
    return Quantity(value, Dimension.base(FORMAL_PREFIX + profile.unit))


# -- mining business cases ------------------------------------------------------------


@dataclass(frozen=True)
class BusinessCaseReport:
    operating: Optional[bool]
    replacement_same: Optional[bool]
    replacement_improved: Optional[bool]
    productivity: Optional[Quantity]
    errors: tuple[str, ...] = ()

    def passed(self) -> bool:
        checks = [c for c in (self.operating, self.replacement_same, self.replacement_improved) if c is not None]
        return bool(checks) and all(checks)


def operating_case(earn_rate: Quantity, cost_rate: Quantity) -> bool:
    """Running the equipment pays: cost per time at most earnings per time."""
    if earn_rate.dim != cost_rate.dim:
        raise DimensionMismatch(earn_rate.dim, cost_rate.dim, "operating case compares two rates")
    return cost_rate.value <= earn_rate.value


def replacement_same_case(t: Quantity, earn_rate: Quantity, equipment_cost: Quantity) -> bool:
    """Earnings over the write-off period cover like-for-like replacement."""
    earned = t * earn_rate
    if earned.dim != equipment_cost.dim:
        raise DimensionMismatch(equipment_cost.dim, earned.dim, "t*e against equipment cost")
    return earned.value >= equipment_cost.value


def replacement_improved_case(
    t: Quantity,
    earn_rate: Quantity,
    earn_rate_new: Quantity,
    equipment_cost: Quantity,
    equipment_cost_new: Quantity,
) -> bool:
    """The earnings gain over the write-off period covers the cost step-up."""
    if earn_rate.dim != earn_rate_new.dim:
        raise DimensionMismatch(earn_rate.dim, earn_rate_new.dim, "earning rates")
    if equipment_cost.dim != equipment_cost_new.dim:
        raise DimensionMismatch(equipment_cost.dim, equipment_cost_new.dim, "equipment costs")
    gain = t * (earn_rate_new - earn_rate)
    step_up = equipment_cost_new - equipment_cost
    if gain.dim != step_up.dim:
        raise DimensionMismatch(step_up.dim, gain.dim, "t*(e'-e) against cost difference")
    return gain.value >= step_up.value


def mining_productivity(earn_rate: Quantity, cost_rate: Quantity) -> Quantity:
    """Earnings over cost; dimensionless exactly when the dimensions cancel."""
    return earn_rate / cost_rate


def business_case(
    earn_rate: Quantity,
    cost: Quantity,
    earn_rate_new: Optional[Quantity] = None,
    cost_new: Optional[Quantity] = None,
    t: Optional[Quantity] = None,
) -> BusinessCaseReport:
    """Run every inequality the inputs support, each dimension-checked on
    its own: the operating comparison wants two rates, the write-off
    comparisons want a time and lump costs.  Checks whose dimensions do
    not cohere are reported as errors rather than silently cast."""
    errors: list[str] = []
    operating = replacement_same = replacement_improved = None
    productivity = None

    try:
        operating = operating_case(earn_rate, cost)
    except DimensionMismatch as exc:
        errors.append(f"operating: {exc}")
    try:
        productivity = mining_productivity(earn_rate, cost)
    except DimensionMismatch as exc:  # pragma: no cover - division always combines
        errors.append(f"productivity: {exc}")

    if t is not None:
        try:
            replacement_same = replacement_same_case(t, earn_rate, cost)
        except DimensionMismatch as exc:
            errors.append(f"replacement-same: {exc}")
        if earn_rate_new is not None and cost_new is not None:
            try:
                replacement_improved = replacement_improved_case(t, earn_rate, earn_rate_new, cost, cost_new)
            except DimensionMismatch as exc:
                errors.append(f"replacement-improved: {exc}")

    return BusinessCaseReport(
        operating=operating,
        replacement_same=replacement_same,
        replacement_improved=replacement_improved,
        productivity=productivity,
        errors=tuple(errors),
    )


# -- expected unit value ------------------------------------------------------------


def expected_value(p_success: Rat, world_money: Quantity, supply: Rat) -> Quantity:
    """Expected value of one unit: success probability times the money
    the system would then represent, divided by the unit supply.

    Division is total, so a zero supply yields zero; callers presenting
    results should note that degenerate case rather than fail on it."""
    if p_success < 0 or p_success > 1:
        raise ValueError("success probability must lie in [0, 1]")
    return world_money * p_success / supply
