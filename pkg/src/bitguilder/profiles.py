"""Money profiles: the parameter bundle a ledger instance runs under.

A profile fixes the unit, the quantum (smallest transferable fraction),
the yield schedule, fee policy, consensus margins and feature flags.
The ``exim`` policy admits no administrative balance mutation whatsoever;
a managed supply hook exists only under the ``tim`` policy (the
near-money side of a dual system).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import FrozenSet

from .meadow import RAT_ZERO, Rat
from .units import Dimension

__all__ = ["MoneyProfile", "PROFILES", "get_profile"]

FEATURES_ALL = frozenset({"future", "conditional", "destruction", "restitution", "penalties"})


@dataclass(frozen=True)
class MoneyProfile:
    name: str
    unit: str                     # base unit symbol (dimension tag)
    policy: str                   # "exim" (access-only) or "tim" (ownership-compatible)
    quantum: Rat                  # units per quantum
    initial_yield: int            # h0, in quanta
    halving_interval: int         # blocks per halving epoch (H)
    epoch_limit: int              # epochs after which yield is zero (E)
    managed_supply: bool = False  # governor-adjustable supply (tim only)
    min_fee: int = 1              # quanta
    epsilon: Rat = RAT_ZERO       # replacement margin for chain selection
    checkpoint_depth: int | None = 100
    alpha: Rat = RAT_ZERO         # difficulty sloping exponent
    digest_len: int = 32
    signer: str = "null"
    default_difficulty: int = 1
    features: FrozenSet[str] = frozenset()

    def __post_init__(self):
        if self.policy not in ("exim", "tim"):
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.managed_supply and self.policy == "exim":
            raise ValueError("exim profile forbids a managed supply")
        if self.quantum <= 0:
            raise ValueError("quantum must be positive")
        bad = set(self.features) - FEATURES_ALL
        if bad:
            raise ValueError(f"unknown feature flags {sorted(bad)}")

    @property
    def dimension(self) -> Dimension:
        return Dimension.base(self.unit)

    def has(self, feature: str) -> bool:
        return feature in self.features

    def with_overrides(self, **kwargs) -> "MoneyProfile":
        if "quantum" in kwargs and isinstance(kwargs["quantum"], str):
            kwargs["quantum"] = Rat.parse(kwargs["quantum"])
        for key in ("epsilon", "alpha"):
            if key in kwargs and isinstance(kwargs[key], str):
                kwargs[key] = Rat.parse(kwargs[key])
        if "features" in kwargs:
            kwargs["features"] = frozenset(kwargs["features"])
        return replace(self, **kwargs)


def _units(n: int, quantum: Rat) -> int:
    """Quanta for n whole units."""
    per_unit = quantum.inverse()
    assert per_unit.is_integer
    return n * per_unit.num


_Q8 = Rat(1, 10**8)
_Q15 = Rat(1, 10**15)

PROFILES: dict[str, MoneyProfile] = {}


def _register(profile: MoneyProfile) -> MoneyProfile:
    PROFILES[profile.name] = profile
    return profile


#: Bitcoin-shaped parameterization: 50-unit initial yield halving every
#: 210,000 blocks, 1e-8 quantum, which bounds circulation at about 2.1e7 units.
BITCOIN = _register(
    MoneyProfile(
        name="bitcoin",
        unit="BTC",
        policy="tim",
        quantum=_Q8,
        initial_yield=_units(50, _Q8),
        halving_interval=210_000,
        epoch_limit=64,
        min_fee=1,
        signer="ed25519",
    )
)

#: The access-only clone of the Bitcoin parameterization.
BITGUILDER = _register(
    MoneyProfile(
        name="bitguilder",
        unit="BGU",
        policy="exim",
        quantum=_Q8,
        initial_yield=_units(50, _Q8),
        halving_interval=210_000,
        epoch_limit=64,
        min_fee=1,
        signer="ed25519",
    )
)

#: Extended profile: femto quantum for micropayments, all transfer
#: extensions enabled, steeper difficulty sloping available to scenarios.
BITGUILDER_PLUS = _register(
    MoneyProfile(
        name="bitguilder-plus",
        unit="BGU",
        policy="exim",
        quantum=_Q15,
        initial_yield=_units(50, _Q15),
        halving_interval=210_000,
        epoch_limit=64,
        min_fee=1,
        signer="ed25519",
        features=FEATURES_ALL,
    )
)

#: Managed near-money paired with the access-only unit in dual-system runs.
NMCOIN = _register(
    MoneyProfile(
        name="nmcoin",
        unit="NMC",
        policy="tim",
        quantum=_Q8,
        initial_yield=_units(50, _Q8),
        halving_interval=10,
        epoch_limit=6,
        managed_supply=True,
        min_fee=1,
        signer="null",
    )
)

#: Small, fast parameterization for tests and scenario runs: total supply
#: bound 2 * 50 * 10 = 1000 units, six halving epochs, trivial difficulty.
DESK = _register(
    MoneyProfile(
        name="desk",
        unit="BGU",
        policy="exim",
        quantum=_Q8,
        initial_yield=_units(50, _Q8),
        halving_interval=10,
        epoch_limit=6,
        min_fee=0,
        checkpoint_depth=None,
        signer="null",
        features=FEATURES_ALL,
    )
)


def get_profile(name: str, **overrides) -> MoneyProfile:
    try:
        profile = PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; known: {sorted(PROFILES)}") from None
    return profile.with_overrides(**overrides) if overrides else profile
