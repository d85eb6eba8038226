"""Promise engine: declarations with scoped visibility, status tracking
against observed ledger events, and anonymity-set accounting.

A promise never creates an enforceable obligation; nothing in this module
can move a balance or force the promised act.  Declaring one only changes
what the agents in its scope may expect, so the whole lifecycle is
``declared -> satisfied | expectation-lapsed``, driven purely by observed
events and deadline passage.

Anonymity sets: an observer's candidate set for who controls an address
starts at the whole population and shrinks by intersection with every
visible promise that links the address to an agent or group.  Knowledge
can only grow, so anonymity sets only shrink.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import FrozenSet, Iterable, Optional, Sequence, Union

from .meadow import Rat

__all__ = [
    "DECLARED",
    "SATISFIED",
    "LAPSED",
    "TransferBody",
    "ServiceOffer",
    "ServeInOrder",
    "AcceptsTransfers",
    "SatisfiesCondition",
    "TransferTrigger",
    "Conditional",
    "Promise",
    "PromiseRegistry",
    "KnowledgeBase",
    "MalformedScope",
    "TransferObserved",
    "ServiceRequested",
    "ServiceDelivered",
    "ConditionConfirmed",
    "PublicationObserved",
    "anonymity_set",
    "events_from_chain",
    "promise_from_dict",
    "run_service_purchase_scenario",
    "ScenarioReport",
    "SCENARIO_VARIANTS",
]

DECLARED = "declared"
SATISFIED = "satisfied"
LAPSED = "expectation-lapsed"


class MalformedScope(ValueError):
    pass


# -- promise bodies ---------------------------------------------------------


@dataclass(frozen=True)
class TransferBody:
    """Sees to it that an amount reaches ``to_address`` before ``deadline``."""

    amount: int
    to_address: bytes
    from_address: Optional[bytes] = None
    deadline: Optional[Rat] = None


@dataclass(frozen=True)
class ServiceOffer:
    """Provides service to at most ``capacity`` agents meeting ``condition``
    against the stated price."""

    service_id: str
    capacity: int
    condition: Optional[str] = None
    price: int = 0


@dataclass(frozen=True)
class ServeInOrder:
    service_id: str


@dataclass(frozen=True)
class AcceptsTransfers:
    """Announces an address as a pay-in point.

    ``own_account=True`` is a control claim by the promiser; with
    ``own_account=False`` the promiser merely announces someone's pay-in
    point, which links the address to the promise's audience instead."""

    address: bytes
    own_account: bool = True


@dataclass(frozen=True)
class SatisfiesCondition:
    condition: str


@dataclass(frozen=True)
class TransferTrigger:
    to_address: bytes
    amount: int
    from_address: Optional[bytes] = None  # None: the payer stays undisclosed


@dataclass(frozen=True)
class Conditional:
    """Arms when the trigger transfer is observed; the inner body then
    applies to whoever made the transfer."""

    trigger: TransferTrigger
    then: "Body"


Body = Union[TransferBody, ServiceOffer, ServeInOrder, AcceptsTransfers, SatisfiesCondition, Conditional]


@dataclass
class Promise:
    promiser: str
    promisees: FrozenSet[str]
    scope: FrozenSet[str]
    body: Body
    registry_id: int = -1
    status: str = DECLARED
    armed: bool = False            # conditionals: trigger seen
    trigger_agent: Optional[str] = None
    served: tuple = ()             # service offers: recipients in serve order

    def visible_to(self, agent: str) -> bool:
        return agent in self.scope


# -- observed events -----------------------------------------------------------


@dataclass(frozen=True)
class TransferObserved:
    time: Rat
    txid: bytes
    from_address: bytes
    to_address: bytes
    amount: int
    confirmations: int
    sender_agent: Optional[str] = None  # who the engine knows made it, if anyone


@dataclass(frozen=True)
class ServiceRequested:
    time: Rat
    service_id: str
    agent: str


@dataclass(frozen=True)
class ServiceDelivered:
    time: Rat
    service_id: str
    provider: str
    recipient: str


@dataclass(frozen=True)
class ConditionConfirmed:
    time: Rat
    agent: str
    condition: str
    holds: bool


@dataclass(frozen=True)
class PublicationObserved:
    time: Rat
    agent: str
    reference: bytes  # txid the agent published details for


Event = Union[TransferObserved, ServiceRequested, ServiceDelivered, ConditionConfirmed, PublicationObserved]


class PromiseRegistry:
    """Declaration store and status tracker for one simulated population."""

    def __init__(self, population: FrozenSet[str], confirmation_threshold: int = 1):
        self.population = frozenset(population)
        self.confirmation_threshold = confirmation_threshold
        self._promises: list[Promise] = []
        self._conditions: dict[tuple[str, str], bool] = {}
        self._requests: dict[str, list[str]] = {}      # service -> requesters, arrival order
        self._deliveries: dict[str, list[str]] = {}    # service -> recipients, delivery order
        self._unserved: dict[str, list[str]] = {}
        self._publications: set[tuple[str, bytes]] = set()
        self.settled_at: Optional[Rat] = None

    # -- declaration -------------------------------------------------------

    def declare(self, promise: Promise) -> int:
        if promise.promiser not in promise.scope:
            raise MalformedScope("the promiser must belong to the scope")
        if not promise.scope:
            raise MalformedScope("empty scope")
        _check_body(promise.body)
        promise = replace(promise, registry_id=len(self._promises), status=DECLARED)
        self._promises.append(promise)
        return promise.registry_id

    def promises(self) -> tuple[Promise, ...]:
        return tuple(self._promises)

    def get(self, registry_id: int) -> Promise:
        return self._promises[registry_id]

    def visible_to(self, agent: str) -> tuple[Promise, ...]:
        return tuple(p for p in self._promises if p.visible_to(agent))

    def _set_status(self, promise: Promise, status: str) -> None:
        if promise.status != DECLARED:
            return  # terminal states never transition again
        promise.status = status

    # -- observation ----------------------------------------------------------

    def observe(self, events: Sequence[Event], final_time: Optional[Rat] = None) -> None:
        """Consume time-ordered events, then settle deadlines at final_time."""
        last_time = None
        for event in events:
            if last_time is not None and event.time < last_time:
                raise ValueError("events must be time-ordered")
            last_time = event.time
            self._lapse_expired(event.time)
            self._consume(event)
        if final_time is not None:
            self._lapse_expired(final_time, inclusive=True)
            self.settled_at = final_time

    def _lapse_expired(self, now: Rat, inclusive: bool = False) -> None:
        for promise in self._promises:
            if promise.status != DECLARED:
                continue
            body = promise.body
            if isinstance(body, TransferBody) and body.deadline is not None:
                expired = body.deadline <= now if inclusive else body.deadline < now
                if expired:
                    self._set_status(promise, LAPSED)

    def _consume(self, event: Event) -> None:
        if isinstance(event, ConditionConfirmed):
            self._conditions[(event.agent, event.condition)] = event.holds
            for promise in self._promises:
                body = promise.body
                if (
                    isinstance(body, SatisfiesCondition)
                    and body.condition == event.condition
                    and promise.promiser == event.agent
                    and promise.status == DECLARED
                ):
                    self._set_status(promise, SATISFIED if event.holds else LAPSED)
            return

        if isinstance(event, PublicationObserved):
            self._publications.add((event.agent, event.reference))
            return

        if isinstance(event, ServiceRequested):
            self._requests.setdefault(event.service_id, []).append(event.agent)
            return

        if isinstance(event, ServiceDelivered):
            self._deliveries.setdefault(event.service_id, []).append(event.recipient)
            for promise in self._promises:
                self._apply_delivery(promise, event)
            return

        if isinstance(event, TransferObserved):
            if event.confirmations < self.confirmation_threshold:
                return
            for promise in self._promises:
                self._apply_transfer(promise, event)
            return

    def _apply_transfer(self, promise: Promise, event: TransferObserved) -> None:
        body = promise.body
        if isinstance(body, TransferBody) and promise.status == DECLARED:
            if (
                event.to_address == body.to_address
                and event.amount == body.amount
                and (body.from_address is None or event.from_address == body.from_address)
                and (body.deadline is None or event.time <= body.deadline)
            ):
                self._set_status(promise, SATISFIED)
        elif isinstance(body, Conditional) and not promise.armed:
            trig = body.trigger
            if (
                event.to_address == trig.to_address
                and event.amount == trig.amount
                and (trig.from_address is None or event.from_address == trig.from_address)
            ):
                promise.armed = True
                promise.trigger_agent = event.sender_agent

    def _apply_delivery(self, promise: Promise, event: ServiceDelivered) -> None:
        body = promise.body
        offer = None
        requires_arming = False
        if isinstance(body, ServiceOffer):
            offer = body
        elif isinstance(body, Conditional) and isinstance(body.then, ServiceOffer):
            offer = body.then
            requires_arming = True
        if offer is None or offer.service_id != event.service_id:
            if isinstance(body, ServeInOrder) and body.service_id == event.service_id:
                self._check_serve_order(promise, event.service_id)
            return
        if requires_arming and not promise.armed:
            return
        if len(promise.served) >= offer.capacity:
            self._unserved.setdefault(event.service_id, []).append(event.recipient)
            return
        if offer.condition is not None and not self._conditions.get((event.recipient, offer.condition), False):
            return
        if requires_arming and promise.trigger_agent is not None and event.recipient != promise.trigger_agent:
            return
        promise.served = promise.served + (event.recipient,)
        self._set_status(promise, SATISFIED)

    def _check_serve_order(self, promise: Promise, service_id: str) -> None:
        requests = self._requests.get(service_id, [])
        deliveries = self._deliveries.get(service_id, [])
        expected = [agent for agent in requests if agent in deliveries]
        if deliveries and deliveries != expected[: len(deliveries)]:
            self._set_status(promise, LAPSED)
        elif deliveries:
            self._set_status(promise, SATISFIED)

    def unserved_requests(self, service_id: str) -> tuple[str, ...]:
        """Requesters that arrived after an offer's capacity ran out."""
        requests = self._requests.get(service_id, [])
        capacity = 0
        for promise in self._promises:
            body = promise.body
            offer = body if isinstance(body, ServiceOffer) else (
                body.then if isinstance(body, Conditional) and isinstance(body.then, ServiceOffer) else None
            )
            if offer is not None and offer.service_id == service_id:
                capacity += offer.capacity
        return tuple(requests[capacity:])

    def was_published(self, agent: str, reference: bytes) -> bool:
        return (agent, reference) in self._publications


def _check_body(body: Body) -> None:
    if isinstance(body, TransferBody):
        if body.amount <= 0:
            raise ValueError("promised transfer amount must be positive")
    elif isinstance(body, ServiceOffer):
        if body.capacity < 1:
            raise ValueError("service capacity must be at least one")
    elif isinstance(body, Conditional):
        _check_body(body.then)
    elif not isinstance(body, (ServeInOrder, AcceptsTransfers, SatisfiesCondition)):
        raise TypeError(f"not a promise body: {body!r}")


class KnowledgeBase:
    """What one agent can see: scoped promises plus observed chain facts.
    Both components only ever grow."""

    def __init__(self, agent: str, registry: PromiseRegistry):
        self.agent = agent
        self.registry = registry
        self._facts: list = []

    def record_fact(self, fact) -> None:
        self._facts.append(fact)

    @property
    def facts(self) -> tuple:
        return tuple(self._facts)

    def visible_promises(self) -> tuple[Promise, ...]:
        return self.registry.visible_to(self.agent)


# -- anonymity accounting ----------------------------------------------------


def _links_of(promise: Promise) -> Iterable[tuple[bytes, FrozenSet[str]]]:
    """(address, candidate controllers) pairs a promise discloses."""
    body = promise.body
    if isinstance(body, AcceptsTransfers):
        if body.own_account:
            yield body.address, frozenset({promise.promiser})
        else:
            yield body.address, promise.promisees
    elif isinstance(body, TransferBody):
        if body.from_address is not None:
            yield body.from_address, frozenset({promise.promiser})
    elif isinstance(body, Conditional):
        trig = body.trigger
        if trig.from_address is not None:
            yield trig.from_address, promise.promisees


def anonymity_set(address: bytes, observer: str, registry: PromiseRegistry) -> FrozenSet[str]:
    """Agents the observer cannot tell apart as the address controller.

    Starts at the whole population; every promise visible to the observer
    that links the address to an agent or group intersects the set down.
    """
    candidates = registry.population
    for promise in registry.visible_to(observer):
        for linked_address, group in _links_of(promise):
            if linked_address == address:
                candidates = candidates & group
    return candidates


# -- ledger bridge --------------------------------------------------------------


def events_from_chain(view, final_time: Optional[Rat] = None, agent_of_address=None) -> list[TransferObserved]:
    """Extract transfer events from a chain view, ordered by height.

    Confirmation counts are taken against the view's tip; block height
    serves as event time.  ``agent_of_address`` optionally names senders."""
    from . import ledger as _ledger

    events: list[TransferObserved] = []
    total = len(view)
    for height, block in enumerate(view.blocks):
        for tx in block.txs:
            txid = _ledger.tx_id(tx, view.profile.digest_len)
            sender_address = tx.inputs[0][0]
            sender_agent = agent_of_address(sender_address) if agent_of_address else None
            for to_address, amount in tx.outputs:
                events.append(
                    TransferObserved(
                        time=Rat(height),
                        txid=txid,
                        from_address=sender_address,
                        to_address=to_address,
                        amount=amount,
                        confirmations=total - height,
                        sender_agent=sender_agent,
                    )
                )
    return events


def promise_from_dict(data: dict) -> Promise:
    """Build a promise from a config declaration (addresses hex-encoded)."""
    body_data = dict(data["body"])
    kind = body_data.pop("kind")
    if kind == "transfer":
        body: Body = TransferBody(
            amount=int(body_data["amount"]),
            to_address=bytes.fromhex(body_data["to_address"]),
            from_address=bytes.fromhex(body_data["from_address"]) if body_data.get("from_address") else None,
            deadline=Rat.parse(str(body_data["deadline"])) if body_data.get("deadline") is not None else None,
        )
    elif kind == "service-offer":
        body = ServiceOffer(
            service_id=body_data["service_id"],
            capacity=int(body_data.get("capacity", 1)),
            condition=body_data.get("condition"),
            price=int(body_data.get("price", 0)),
        )
    elif kind == "serve-in-order":
        body = ServeInOrder(service_id=body_data["service_id"])
    elif kind == "accepts-transfers":
        body = AcceptsTransfers(
            address=bytes.fromhex(body_data["address"]),
            own_account=bool(body_data.get("own_account", True)),
        )
    elif kind == "satisfies-condition":
        body = SatisfiesCondition(condition=body_data["condition"])
    else:
        raise ValueError(f"unknown promise body kind {kind!r}")
    return Promise(
        promiser=data["promiser"],
        promisees=frozenset(data.get("promisees", [data["promiser"]])),
        scope=frozenset(data.get("scope", [data["promiser"]])),
        body=body,
    )


# -- the two-party service purchase scenario -----------------------------------

SCENARIO_VARIANTS = ("base", "alt1", "alt2", "alt3")


@dataclass
class ScenarioReport:
    variant: str
    statuses: dict
    transfer_satisfied: bool
    service_delivered: bool
    condition_verified: bool
    anonymity: dict  # (address label, observer) -> sorted agent list
    population: tuple
    group: tuple


def run_service_purchase_scenario(variant: str = "base", confirmation_threshold: int = 1) -> ScenarioReport:
    """Replay the anonymous service purchase between a provider and a payer.

    A provider P offers, to a group G and with the whole exchange scoped to
    G, a service for a payment into its account pk1; a group member Q
    promises privately (scope {P, Q}) that it satisfies the gating
    condition and will pay from its account pk2; P's final promise commits
    the delivery once the payment shows on chain.  The variants differ in
    that final promise: the base form names the paying account to G, alt1
    names the payer agent as promisee, alt2 and alt3 leave the account
    undisclosed (to G and to Q respectively).

    The payment itself runs over a real minimal chain, so transfer
    satisfaction reflects actual confirmations.
    """
    if variant not in SCENARIO_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, pick one of {SCENARIO_VARIANTS}")

    import random

    from . import crypto as _crypto
    from . import ledger as _ledger
    from .consensus import ChainView
    from .profiles import get_profile

    profile = get_profile("desk")
    signer = _crypto.get_signer(profile.signer)
    rng = random.Random(2024)

    population = frozenset({"P", "Q", "g1", "g2", "m0", "out1", "out2"})
    group = frozenset({"P", "Q", "g1", "g2"})

    provider_key = signer.gen_keypair(rng)   # pk1: P's receiving account
    payer_key = signer.gen_keypair(rng)      # pk2: Q's paying account
    miner_key = signer.gen_keypair(rng)      # m0 funds the fixture
    pk1, pk2 = provider_key.address, payer_key.address

    price = 7 * 10**8  # 7 units in quanta
    condition = "gamma"
    service = "s"

    registry = PromiseRegistry(population=population, confirmation_threshold=confirmation_threshold)

    # 1. the offer to the group
    registry.declare(Promise("P", group, group, ServiceOffer(service, capacity=1, condition=condition, price=price)))
    # 2. requests will be served in arrival order
    registry.declare(Promise("Q", group, group, ServeInOrder(service)))
    # 3. the pay-in account is announced to the group (not as anyone's own)
    registry.declare(Promise("Q", group, group, AcceptsTransfers(pk1, own_account=False)))
    # 4. the payer privately confirms the gating condition
    registry.declare(Promise("Q", frozenset({"P"}), frozenset({"P", "Q"}), SatisfiesCondition(condition)))
    # 5. the payer privately commits to the payment
    registry.declare(
        Promise("Q", frozenset({"P"}), frozenset({"P", "Q"}), TransferBody(price, pk1, from_address=pk2, deadline=Rat(10)))
    )
    # 6. the final promise, in its variant
    if variant == "base":
        final = Promise("P", group, group, Conditional(TransferTrigger(pk1, price, from_address=pk2), ServiceOffer(service, 1, condition)))
    elif variant == "alt1":
        final = Promise("P", frozenset({"Q"}), group, Conditional(TransferTrigger(pk1, price, from_address=pk2), ServiceOffer(service, 1, condition)))
    elif variant == "alt2":
        final = Promise("P", group, group, Conditional(TransferTrigger(pk1, price, from_address=None), ServiceOffer(service, 1, condition)))
    else:  # alt3
        final = Promise("P", frozenset({"Q"}), group, Conditional(TransferTrigger(pk1, price, from_address=None), ServiceOffer(service, 1, condition)))
    final_id = registry.declare(final)

    # the payment happens on a real chain: m0 mines, funds pk2, Q pays pk1
    view = ChainView(profile)
    view.append(_ledger.build_block(b"", 0, [], miner_key, view.state, profile))
    fund = _ledger.build_transaction(
        [(miner_key, price + 10**8)], [(pk2, price + 10**8)], 0,
        rng.getrandbits(128).to_bytes(16, "big"), profile,
    )
    view.append(_ledger.build_block(view.tip_id, 1, [fund], miner_key, view.state, profile))
    payment = _ledger.build_transaction(
        [(payer_key, price)], [(pk1, price)], 0,
        rng.getrandbits(128).to_bytes(16, "big"), profile,
    )
    view.append(_ledger.build_block(view.tip_id, 2, [payment], miner_key, view.state, profile))
    for extra in range(confirmation_threshold):
        view.append(_ledger.build_block(view.tip_id, 3 + extra, [], miner_key, view.state, profile))

    agent_names = {pk2: "Q", pk1: "P", miner_key.address: "m0"}
    chain_events = events_from_chain(view, agent_of_address=agent_names.get)
    side_events = [
        ConditionConfirmed(Rat(0), "Q", condition, True),
        ServiceRequested(Rat(0), service, "Q"),
    ]
    horizon = Rat(len(view))
    events = sorted(side_events + chain_events, key=lambda e: e.time)
    registry.observe(events)
    # delivery follows once the trigger armed and the condition checked out
    delivered = registry.get(final_id).armed
    if delivered:
        registry.observe([ServiceDelivered(horizon, service, "P", "Q")], final_time=horizon)
    else:
        registry.observe([], final_time=horizon)

    statuses = {p.registry_id: p.status for p in registry.promises()}
    anonymity = {}
    for observer in ("g1", "out1", "P", "Q"):
        anonymity[("pk2", observer)] = tuple(sorted(anonymity_set(pk2, observer, registry)))
        anonymity[("pk1", observer)] = tuple(sorted(anonymity_set(pk1, observer, registry)))

    return ScenarioReport(
        variant=variant,
        statuses=statuses,
        transfer_satisfied=registry.get(4).status == SATISFIED,
        service_delivered=registry.get(final_id).status == SATISFIED,
        condition_verified=registry.get(3).status == SATISFIED,
        anonymity=anonymity,
        population=tuple(sorted(population)),
        group=tuple(sorted(group)),
    )
