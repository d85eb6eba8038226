"""Deterministic discrete-event simulation of the peer-to-peer network.

Participants exchange transactions and blocks over a latency model, miners
compete for blocks, and scripted actions inject transfers, attacks and
partitions.  Two mining modes exist: ``hashcash`` runs the real puzzle
search and derives block times from the attempt count, ``sampled`` draws
per-miner exponential delays with rate proportional to hash power over
difficulty, which makes large Monte Carlo studies tractable.  Identical
config and seed give a bit-identical event trace.

Each participant's client is split into three parts: a network-facing
input client (chain and mempool maintenance), a key-holding transaction
constructor, and a placement client that only hands signed transactions
to the network.  The constructor is the sole component with access to the
key vault.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from . import crypto, ledger
from .consensus import ChainView, Decision, choose, confirmations, detect_forks
from .crypto import KeyPair, Signer, get_signer
from .events import EventQueue
from .meadow import RAT_ZERO, Rat
from .profiles import MoneyProfile, get_profile

__all__ = [
    "Role",
    "PARTICIPANT_TAXONOMY",
    "ParticipantSpec",
    "LatencySpec",
    "ScenarioConfig",
    "InvalidConfig",
    "Metrics",
    "SimResult",
    "Simulation",
    "run",
    "partition",
    "ParticipationService",
    "ServiceError",
]


class Role:
    USER = "user"
    MINER = "miner"
    INDIRECT_USER = "indirect-user"
    SERVICE = "participation-service"
    ATTACKER = "attacker"

    ALL = (USER, MINER, INDIRECT_USER, SERVICE, ATTACKER)


#: Finer-grained participant descriptions usable as node metadata, spanning
#: developers, user variants, the miner split and peripheral actors.
PARTICIPANT_TAXONOMY = (
    "developer",
    "ordinary-user",
    "participation-service-provider",
    "exchange-operator",
    "wallet-manager",
    "service-customer",
    "proper-miner",
    "poolmaster",
    "botmaster",
    "equipment-vendor",
    "market-analyst",
    "legal-expert",
    "researcher",
    "deviant-participant",
)


class InvalidConfig(ValueError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"invalid config: {reason}")


@dataclass(frozen=True)
class LatencySpec:
    kind: str = "uniform"  # "fixed" | "uniform"
    lo: int = 1
    hi: int = 5

    def draw(self, rng: random.Random) -> Rat:
        if self.kind == "fixed":
            return Rat(self.lo)
        span = self.hi - self.lo
        return Rat(self.lo) + Rat(span) * Rat(rng.getrandbits(32), 1 << 32)


@dataclass(frozen=True)
class ParticipantSpec:
    id: str
    role: str = Role.USER
    hash_power: Rat = RAT_ZERO
    service: Optional[str] = None  # indirect users: who operates for them
    taxonomy: Optional[str] = None


@dataclass(frozen=True)
class Action:
    time: Rat
    kind: str
    params: tuple  # sorted (key, value) pairs; kept hashable for determinism

    def param(self, key, default=None):
        for k, v in self.params:
            if k == key:
                return v
        return default


def _freeze_params(params: dict) -> tuple:
    return tuple(sorted(params.items()))


@dataclass(frozen=True)
class ScenarioConfig:
    profile: MoneyProfile
    participants: tuple[ParticipantSpec, ...]
    seed: int = 0
    latency: LatencySpec = LatencySpec()
    mining_mode: str = "sampled"  # "sampled" | "hashcash"
    block_interval: int = 10      # mean ticks between blocks at default difficulty
    hashes_per_tick: int = 16     # hashcash mode: digest rate of unit hash power
    actions: tuple[Action, ...] = ()
    stop_blocks: Optional[int] = None
    stop_time: Optional[Rat] = None
    promises: tuple = ()          # declaration dicts picked up by the promise engine

    def validate(self) -> None:
        if not self.participants:
            raise InvalidConfig("no participants")
        ids = [p.id for p in self.participants]
        if len(set(ids)) != len(ids):
            raise InvalidConfig("duplicate participant ids")
        if self.mining_mode not in ("sampled", "hashcash"):
            raise InvalidConfig(f"unknown mining mode {self.mining_mode!r}")
        powers = [p.hash_power for p in self.participants]
        if any(p < 0 for p in powers):
            raise InvalidConfig("negative hash power")
        total = sum(powers, RAT_ZERO)
        miners = [p for p in self.participants if p.hash_power > 0]
        if not miners:
            raise InvalidConfig("at least one participant needs hash power")
        if total != Rat(1):
            raise InvalidConfig(f"hash powers must sum to 1, got {total}")
        for p in self.participants:
            if p.role not in Role.ALL:
                raise InvalidConfig(f"unknown role {p.role!r} for {p.id}")
            if p.role == Role.INDIRECT_USER:
                if p.service is None:
                    raise InvalidConfig(f"indirect user {p.id} names no participation service")
                if p.service not in ids:
                    raise InvalidConfig(f"unknown participation service {p.service!r}")
                if p.hash_power != RAT_ZERO:
                    raise InvalidConfig("indirect users hold no keys and cannot mine")
        if self.stop_blocks is None and self.stop_time is None:
            raise InvalidConfig("a stop condition (blocks or time) is required")
        known_actions = {
            "transfer", "double_spend", "partition", "deposit",
            "withdraw", "claim_transfer", "audit_services",
        }
        for action in self.actions:
            if action.time < 0:
                raise InvalidConfig("action scheduled before time zero")
            if action.kind not in known_actions:
                raise InvalidConfig(f"unknown action kind {action.kind!r}")
        if self.latency.kind not in ("fixed", "uniform"):
            raise InvalidConfig(f"unknown latency kind {self.latency.kind!r}")
        if self.latency.kind == "uniform" and self.latency.hi < self.latency.lo:
            raise InvalidConfig("latency bounds reversed")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        try:
            profile_section = data.get("profile", "desk")
            if isinstance(profile_section, str):
                profile = get_profile(profile_section)
            else:
                name = profile_section.get("name", "desk")
                overrides = {k: v for k, v in profile_section.items() if k != "name"}
                profile = get_profile(name, **overrides)
            participants = tuple(
                ParticipantSpec(
                    id=str(p["id"]),
                    role=p.get("role", Role.USER),
                    hash_power=Rat.parse(str(p.get("hash_power", "0"))),
                    service=p.get("service"),
                    taxonomy=p.get("taxonomy"),
                )
                for p in data.get("participants", ())
            )
            latency_data = data.get("latency", {})
            latency = LatencySpec(
                kind=latency_data.get("kind", "uniform"),
                lo=int(latency_data.get("lo", 1)),
                hi=int(latency_data.get("hi", 5)),
            )
            actions = tuple(
                Action(
                    time=Rat.parse(str(a["time"])),
                    kind=str(a["kind"]),
                    params=_freeze_params({k: v for k, v in a.items() if k not in ("time", "kind")}),
                )
                for a in data.get("actions", ())
            )
            stop = data.get("stop", {})
            config = cls(
                profile=profile,
                participants=participants,
                seed=int(data.get("seed", 0)),
                latency=latency,
                mining_mode=data.get("mining", "sampled"),
                block_interval=int(data.get("block_interval", 10)),
                hashes_per_tick=int(data.get("hashes_per_tick", 16)),
                actions=actions,
                stop_blocks=stop.get("blocks"),
                stop_time=Rat.parse(str(stop["time"])) if "time" in stop else None,
                promises=tuple(data.get("promises", ())),
            )
        except InvalidConfig:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfig(str(exc)) from exc
        config.validate()
        return config


def partition(config: ScenarioConfig, groups: list[list[str]], at: Rat, heal: Rat) -> ScenarioConfig:
    """Scenario hook: return a config with a partition action injected.

    Groups must be disjoint; while the partition is active, messages
    between members of different groups are dropped.
    """
    seen: set[str] = set()
    for group in groups:
        for pid in group:
            if pid in seen:
                raise InvalidConfig(f"overlapping partition groups: {pid}")
            seen.add(pid)
    action = Action(time=at, kind="partition", params=_freeze_params({"groups": tuple(map(tuple, groups)), "heal": heal}))
    from dataclasses import replace

    return replace(config, actions=tuple(sorted(config.actions + (action,), key=lambda a: (a.time, a.kind))))


# -- client decomposition ------------------------------------------------------


class KeyVault:
    """Secret-key store; only the transaction constructor holds a reference."""

    def __init__(self, signer: Signer):
        self._signer = signer
        self._keys: list[KeyPair] = []

    def new_key(self, rng: random.Random) -> KeyPair:
        kp = self._signer.gen_keypair(rng)
        self._keys.append(kp)
        return kp

    @property
    def primary(self) -> KeyPair:
        return self._keys[0]

    def keys(self) -> tuple[KeyPair, ...]:
        return tuple(self._keys)


class TransactionConstructor:
    """Key-holding component: builds and signs transactions from a chain
    state snapshot handed over by the input client.  Never touches the
    network itself."""

    def __init__(self, vault: KeyVault, profile: MoneyProfile, signer: Signer):
        self._vault = vault
        self._profile = profile
        self._signer = signer

    @property
    def address(self) -> bytes:
        return self._vault.primary.address

    def addresses(self) -> tuple[bytes, ...]:
        return tuple(kp.address for kp in self._vault.keys())

    def fresh_address(self, rng: random.Random) -> bytes:
        return self._vault.new_key(rng).address

    def build(
        self,
        inputs: list[tuple[bytes, int]],
        outputs: list[tuple[bytes, int]],
        fee: int,
        nonce: bytes,
        variant: ledger.Variant = ledger.Ordinary(),
    ) -> ledger.Transaction:
        by_address = {kp.address: kp for kp in self._vault.keys()}
        try:
            keyed = [(by_address[address], amount) for address, amount in inputs]
        except KeyError:
            raise ValueError("constructor holds no key for an input address") from None
        return ledger.build_transaction(keyed, outputs, fee, nonce, self._profile, variant, self._signer)

    def build_block(
        self,
        prev: bytes,
        height: int,
        txs: tuple,
        state,
        m: int,
        solution: Optional[bytes] = None,
    ) -> ledger.Block:
        return ledger.build_block(
            prev, height, txs, self._vault.primary, state, self._profile,
            m=m, signer=self._signer, solution=solution,
        )


class UserInputClient:
    """Network-facing component: maintains the chain view and the mempool.
    Holds no secret material."""

    def __init__(self, profile: MoneyProfile, signer: Signer):
        self.view = ChainView(profile, signer)
        self.mempool: list[ledger.Transaction] = []
        self._profile = profile
        self._signer = signer
        self._seen: set[bytes] = set()

    def offer_chain(self, blocks: tuple) -> Decision:
        mine = self.view.block_ids
        fork = 0
        limit = min(len(mine), len(blocks))
        while fork < limit and mine[fork] == ledger.block_id(blocks[fork], self._profile.digest_len):
            fork += 1
        suffix = blocks[fork:]
        if not suffix:
            return Decision("keep", reason="no-new-blocks")
        decision = choose(self.view, suffix)
        if decision.action in ("extend", "replace"):
            self._prune_mempool()
        return decision

    def offer_tx(self, tx: ledger.Transaction) -> bool:
        txid = ledger.tx_id(tx, self._profile.digest_len)
        if txid in self._seen:
            return False
        trial = self.view.state.copy()
        try:
            ledger.admit_transaction(trial, tx, len(self.view), self._profile, self._signer)
        except ledger.TxRejected:
            return False
        self._seen.add(txid)
        self.mempool.append(tx)
        return True

    def _prune_mempool(self) -> None:
        state = self.view.state
        kept = []
        for tx in self.mempool:
            if tx.nonce in state.seen_nonces:
                continue
            kept.append(tx)
        self.mempool = kept

    def select_txs(self, height: int) -> tuple[ledger.Transaction, ...]:
        """Largest consistent prefix of the mempool in arrival order."""
        trial = self.view.state.copy()
        chosen = []
        for tx in self.mempool:
            try:
                ledger.admit_transaction(trial, tx, height, self._profile, self._signer)
            except ledger.TxRejected:
                continue
            chosen.append(tx)
        return tuple(chosen)


class PlacementClient:
    """Hands signed transactions to the network; knows nothing else."""

    def __init__(self, send: Callable):
        self._send = send

    def place(self, tx: ledger.Transaction, at: Rat) -> None:
        self._send(("tx", tx), at)


class Participant:
    def __init__(self, spec: ParticipantSpec, profile: MoneyProfile, signer: Signer, rng: random.Random, send: Callable):
        self.spec = spec
        self.input = UserInputClient(profile, signer)
        vault = KeyVault(signer)
        if spec.role != Role.INDIRECT_USER:
            vault.new_key(rng)
        self.constructor = TransactionConstructor(vault, profile, signer)
        self.placement = PlacementClient(send)
        self.mining_generation = 0
        self.mining_job: Optional[tuple] = None
        self.private_mode = False  # attackers: found blocks are withheld

    @property
    def address(self) -> Optional[bytes]:
        addrs = self.constructor.addresses()
        return addrs[0] if addrs else None

    @property
    def view(self) -> ChainView:
        return self.input.view


# -- participation services -----------------------------------------------------


class ServiceError(ValueError):
    def __init__(self, code: str, detail: str = ""):
        self.code = code
        super().__init__(f"{code}: {detail}" if detail else code)


class ParticipationService:
    """Claims ledger an intermediary keeps for its indirect users.

    On-chain movements happen only on deposits arriving and withdrawals
    leaving; internal transfers move claims alone.  The solvency invariant
    compares on-chain holdings with the claim total.
    """

    def __init__(self, operator_id: str):
        self.operator_id = operator_id
        self.claims: dict[str, int] = {}

    def total_claims(self) -> int:
        return sum(self.claims.values())

    def credit_deposit(self, claimant: str, amount: int) -> None:
        if amount < 0:
            raise ServiceError("malformed", "negative deposit")
        self.claims[claimant] = self.claims.get(claimant, 0) + amount

    def debit_withdrawal(self, claimant: str, amount: int) -> None:
        held = self.claims.get(claimant)
        if held is None:
            raise ServiceError("unknown-claimant", claimant)
        if amount < 0 or held < amount:
            raise ServiceError("insufficient-claim", f"{claimant} holds {held}, asked {amount}")
        self.claims[claimant] = held - amount

    def transfer_claim(self, sender: str, receiver: str, amount: int) -> None:
        self.debit_withdrawal(sender, amount)
        self.credit_deposit(receiver, amount)

    def solvent(self, on_chain_balance: int) -> bool:
        return on_chain_balance >= self.total_claims()

    def require_solvent(self, on_chain_balance: int) -> None:
        if not self.solvent(on_chain_balance):
            raise ServiceError(
                "insolvent-service",
                f"claims {self.total_claims()} exceed holdings {on_chain_balance}",
            )


# -- metrics and results -----------------------------------------------------------


@dataclass
class Metrics:
    blocks_produced: dict = field(default_factory=dict)     # pid -> count (own finds)
    miner_earnings: dict = field(default_factory=dict)      # pid -> quanta on majority chain
    confirmation_latency: dict = field(default_factory=dict)  # txid hex -> ticks (Rat)
    supply_curve: list = field(default_factory=list)        # (height, minted_total)
    fork_count: int = 0
    fork_durations: list = field(default_factory=list)      # Rat spans
    attack_outcomes: list = field(default_factory=list)     # dicts
    action_failures: list = field(default_factory=list)
    promise_statuses: list = field(default_factory=list)
    service_audits: list = field(default_factory=list)
    final_tips: dict = field(default_factory=dict)          # pid -> tip id hex

    def to_jsonl(self) -> str:
        lines = []

        def emit(kind, **fields):
            lines.append(json.dumps({"kind": kind, **fields}, sort_keys=True))

        for pid, count in sorted(self.blocks_produced.items()):
            emit("blocks-produced", participant=pid, count=count)
        for pid, amount in sorted(self.miner_earnings.items()):
            emit("miner-earnings", participant=pid, quanta=amount)
        for txid, latency in sorted(self.confirmation_latency.items()):
            emit("confirmation-latency", tx=txid, ticks=str(latency))
        for height, minted in self.supply_curve:
            emit("supply", height=height, minted=minted)
        emit("forks", count=self.fork_count, durations=[str(d) for d in self.fork_durations])
        for outcome in self.attack_outcomes:
            emit("attack", **outcome)
        for failure in self.action_failures:
            emit("action-failed", **failure)
        for status in self.promise_statuses:
            emit("promise", **status)
        for audit in self.service_audits:
            emit("service-audit", **audit)
        for pid, tip in sorted(self.final_tips.items()):
            emit("final-tip", participant=pid, tip=tip)
        return "\n".join(lines) + "\n"


@dataclass
class SimResult:
    config: ScenarioConfig
    views: dict
    metrics: Metrics
    trace: list
    trace_digest: str

    def majority_view(self) -> ChainView:
        counts: dict[bytes, int] = {}
        weights: dict[bytes, int] = {}
        for view in self.views.values():
            counts[view.tip_id] = counts.get(view.tip_id, 0) + 1
            weights[view.tip_id] = view.total_difficulty
        best_tip = max(counts, key=lambda tip: (counts[tip], weights[tip], tip))
        for view in self.views.values():
            if view.tip_id == best_tip:
                return view
        raise RuntimeError("no views")


# -- the simulation --------------------------------------------------------------


class _AttackState:
    def __init__(self, attacker: str, victim: str, k_c: int, txid_pay: bytes, txid_self: bytes, fork_height: int):
        self.attacker = attacker
        self.victim = victim
        self.k_c = k_c
        self.txid_pay = txid_pay
        self.txid_self = txid_self
        self.fork_height = fork_height
        self.victim_acted = False
        self.acted_at: Optional[Rat] = None
        self.released = False
        self.resolved = False


class Simulation:
    def __init__(self, config: ScenarioConfig):
        config.validate()
        self.config = config
        self.profile = config.profile
        self.signer = get_signer(self.profile.signer)
        self.rng = random.Random(config.seed)
        self.queue = EventQueue()
        self.now = RAT_ZERO
        self.trace: list[dict] = []
        self.metrics = Metrics()
        self.participants: dict[str, Participant] = {}
        self.services: dict[str, ParticipationService] = {}
        self._partitions: list[tuple[tuple[frozenset, ...], Rat]] = []
        self._attack: Optional[_AttackState] = None
        self._pending_deposits: list[tuple[bytes, str, str, int]] = []  # txid, service, claimant, amount
        self._latency_watch: dict[bytes, tuple[str, Rat]] = {}  # txid -> (origin pid, broadcast time)
        self._max_height = -1
        self._forked_since: Optional[Rat] = None
        self._running = True

        for spec in config.participants:
            send = self._make_sender(spec.id)
            self.participants[spec.id] = Participant(spec, self.profile, self.signer, self.rng, send)
            if spec.role == Role.SERVICE:
                self.services[spec.id] = ParticipationService(spec.id)

        for action in sorted(config.actions, key=lambda a: a.time):
            self.queue.push(action.time, ("action", action))
        for pid, part in self.participants.items():
            if part.spec.hash_power > 0:
                self._schedule_mining(pid)

    # -- plumbing ---------------------------------------------------------------

    def _make_sender(self, pid: str):
        def send(message, at: Optional[Rat] = None):
            self._broadcast(pid, message)

        return send

    def _record(self, kind: str, **fields) -> None:
        self.trace.append({"t": str(self.now), "kind": kind, **fields})

    def _reachable(self, a: str, b: str) -> bool:
        for groups, heal in self._partitions:
            if heal <= self.now:
                continue
            ga = gb = None
            for i, group in enumerate(groups):
                if a in group:
                    ga = i
                if b in group:
                    gb = i
            if ga is not None and gb is not None and ga != gb:
                return False
        return True

    def _broadcast(self, sender: str, message) -> None:
        for pid in self.participants:
            if pid == sender:
                continue
            if not self._reachable(sender, pid):
                self._record("deliver-drop", sender=sender, to=pid, what=message[0])
                continue
            delay = self.config.latency.draw(self.rng)
            self.queue.push(self.now + delay, ("deliver", pid, sender, message))

    def _fresh_nonce(self) -> bytes:
        return self.rng.getrandbits(8 * crypto.NONCE_LEN).to_bytes(crypto.NONCE_LEN, "big")

    # -- mining -----------------------------------------------------------------

    def _schedule_mining(self, pid: str) -> None:
        part = self.participants[pid]
        power = part.spec.hash_power
        if power <= 0:
            return
        part.mining_generation += 1
        generation = part.mining_generation
        height = len(part.view)
        prev = part.view.tip_id
        m = self.profile.default_difficulty

        if self.config.mining_mode == "hashcash":
            txs = part.input.select_txs(height)
            puzzle = ledger.make_block_puzzle(prev, part.constructor.address, len(txs), m, self.profile)
            s, attempts = crypto.solve_attempts(puzzle, 1 << 24)
            delay = Rat(attempts) * power.inverse() * Rat(1, self.config.hashes_per_tick)
            part.mining_job = (txs, m, s)
        else:
            mean = Rat(m, self.profile.default_difficulty) * Rat(self.config.block_interval) * power.inverse()
            u = self.rng.random()
            sample = Fraction(-math.log(1.0 - u)).limit_denominator(1 << 48) * Fraction(mean.num, mean.den)
            delay = Rat(sample.numerator, sample.denominator)
            part.mining_job = (None, m, None)
        self.queue.push(self.now + delay, ("mined", pid, generation))

    def _handle_mined(self, pid: str, generation: int) -> None:
        part = self.participants[pid]
        if generation != part.mining_generation or part.mining_job is None:
            return  # stale: the tip moved since this search began
        txs, m, precomputed = part.mining_job
        height = len(part.view)
        prev = part.view.tip_id
        if txs is None:
            txs = part.input.select_txs(height)
        block = part.constructor.build_block(prev, height, txs, part.view.state, m, solution=precomputed)
        try:
            part.view.append(block)
        except ledger.BlockRejected as exc:  # pragma: no cover - consistency guard
            self._record("block-build-failed", pid=pid, reason=str(exc))
            self._schedule_mining(pid)
            return
        part.input._prune_mempool()
        self.metrics.blocks_produced[pid] = self.metrics.blocks_produced.get(pid, 0) + 1
        self._record("block-found", pid=pid, height=height, block=part.view.tip_id.hex()[:16], txs=len(txs))
        self._after_chain_change(pid)
        if not part.private_mode:
            self._broadcast(pid, ("chain", tuple(part.view.blocks)))
        self._schedule_mining(pid)

    # -- event handling -----------------------------------------------------------

    def _handle_deliver(self, pid: str, sender: str, message) -> None:
        part = self.participants[pid]
        kind = message[0]
        if kind == "chain":
            if part.private_mode:
                return  # withholding attacker: keeps mining its own branch
            decision = part.input.offer_chain(message[1])
            if decision.action in ("extend", "replace"):
                self._record(
                    "block-accept", pid=pid, action=decision.action, depth=decision.depth,
                    height=part.view.height, tip=part.view.tip_id.hex()[:16],
                )
                self._schedule_mining(pid)
                self._after_chain_change(pid)
        elif kind == "tx":
            if part.input.offer_tx(message[1]):
                self._record("tx-admit", pid=pid, tx=ledger.tx_id(message[1], self.profile.digest_len).hex()[:16])
                if part.spec.hash_power > 0:
                    self._schedule_mining(pid)

    def _after_chain_change(self, pid: str) -> None:
        part = self.participants[pid]
        view = part.view

        if view.height > self._max_height:
            self._max_height = view.height
            self.metrics.supply_curve.append((view.height, view.state.minted_total))
            if self.config.stop_blocks is not None and len(view) >= self.config.stop_blocks:
                self._running = False

        # confirmation latency watchers (first confirmation at the origin)
        done = []
        for txid, (origin, sent_at) in self._latency_watch.items():
            if origin == pid and confirmations(view, txid) >= 1:
                self.metrics.confirmation_latency[txid.hex()] = self.now - sent_at
                done.append(txid)
        for txid in done:
            del self._latency_watch[txid]

        # deposits credit once the service sees them confirmed
        still_pending = []
        for txid, service_id, claimant, amount in self._pending_deposits:
            if service_id == pid and confirmations(view, txid) >= 1:
                self.services[service_id].credit_deposit(claimant, amount)
                self._record("deposit-credited", service=service_id, claimant=claimant, amount=amount)
            else:
                still_pending.append((txid, service_id, claimant, amount))
        self._pending_deposits = still_pending

        self._update_fork_metrics()
        self._attack_hooks(pid)

    def _update_fork_metrics(self) -> None:
        public = {
            pid: part.view
            for pid, part in self.participants.items()
            if not part.private_mode and len(part.view) > 0
        }
        if len(public) < 2:
            return
        report = detect_forks(public)
        if report.is_fork and self._forked_since is None:
            self._forked_since = self.now
            self.metrics.fork_count += 1
            self._record("fork-detected", tips=len(report.tips))
        elif not report.is_fork and self._forked_since is not None:
            self.metrics.fork_durations.append(self.now - self._forked_since)
            self._record("fork-healed")
            self._forked_since = None

    # -- attack orchestration ---------------------------------------------------

    def _attack_hooks(self, pid: str) -> None:
        attack = self._attack
        if attack is None or attack.resolved:
            return
        victim = self.participants[attack.victim]
        if not attack.victim_acted and confirmations(victim.view, attack.txid_pay) >= attack.k_c:
            attack.victim_acted = True
            attack.acted_at = self.now
            self._record("victim-acted", victim=attack.victim, k_c=attack.k_c)
        if attack.victim_acted and not attack.released:
            attacker = self.participants[attack.attacker]
            private = attacker.view
            # compare private suffix against the heaviest public suffix from the fork point
            best_public = None
            for other_id, other in self.participants.items():
                if other_id == attack.attacker or other.private_mode:
                    continue
                if best_public is None or other.view.total_difficulty > best_public.total_difficulty:
                    best_public = other.view
            if best_public is None or len(private) <= attack.fork_height:
                return
            private_weight = private.difficulty_of_suffix(attack.fork_height)
            public_weight = best_public.difficulty_of_suffix(attack.fork_height)
            threshold = (Rat(1) + self.profile.epsilon) * Rat(public_weight)
            if Rat(private_weight) > threshold:
                attack.released = True
                attacker.private_mode = False
                self._record("attack-released", height=private.height, weight=private_weight)
                self._broadcast(attack.attacker, ("chain", tuple(private.blocks)))

    def _start_double_spend(self, action: Action) -> None:
        attacker_id = action.param("attacker")
        victim_id = action.param("victim")
        amount = int(action.param("amount"))
        fee = int(action.param("fee", self.profile.min_fee))
        k_c = int(action.param("k_c", 1))
        attacker = self.participants[attacker_id]
        victim = self.participants[victim_id]
        address = attacker.constructor.address
        balance = attacker.view.state.balance(address)
        if balance < amount + fee:
            self.metrics.action_failures.append({"action": "double_spend", "reason": "insufficient-funds"})
            return
        tx_pay = attacker.constructor.build(
            [(address, amount + fee)], [(victim.constructor.address, amount)], fee, self._fresh_nonce()
        )
        stash = attacker.constructor.fresh_address(self.rng)
        tx_self = attacker.constructor.build(
            [(address, amount + fee)], [(stash, amount)], fee, self._fresh_nonce()
        )
        digest_len = self.profile.digest_len
        self._attack = _AttackState(
            attacker=attacker_id,
            victim=victim_id,
            k_c=k_c,
            txid_pay=ledger.tx_id(tx_pay, digest_len),
            txid_self=ledger.tx_id(tx_self, digest_len),
            fork_height=len(attacker.view),
        )
        attacker.private_mode = True
        attacker.input.offer_tx(tx_self)       # conflicting branch, mined privately
        attacker.placement.place(tx_pay, self.now)  # public branch pays the victim
        self._schedule_mining(attacker_id)
        self._record("attack-start", attacker=attacker_id, victim=victim_id, k_c=k_c)

    def _resolve_attack(self) -> None:
        attack = self._attack
        if attack is None or attack.resolved:
            return
        attack.resolved = True
        public = {pid: part for pid, part in self.participants.items() if pid != attack.attacker}
        tips = {}
        for pid, part in public.items():
            tips[part.view.tip_id] = tips.get(part.view.tip_id, 0) + 1
        majority_tip = max(tips, key=lambda t: (tips[t], t)) if tips else b""
        succeeded = False
        for part in public.values():
            if part.view.tip_id == majority_tip:
                succeeded = attack.victim_acted and confirmations(part.view, attack.txid_self) >= 1
                break
        self.metrics.attack_outcomes.append(
            {
                "attack": "double-spend",
                "attacker": attack.attacker,
                "victim": attack.victim,
                "k_c": attack.k_c,
                "victim_acted": attack.victim_acted,
                "released": attack.released,
                "success": bool(succeeded),
            }
        )

    # -- scripted actions ----------------------------------------------------------

    def _handle_action(self, action: Action) -> None:
        self._record("action", what=action.kind)
        handler = {
            "transfer": self._do_transfer,
            "double_spend": self._start_double_spend,
            "partition": self._do_partition,
            "deposit": self._do_deposit,
            "withdraw": self._do_withdraw,
            "claim_transfer": self._do_claim_transfer,
            "audit_services": self._do_audit_services,
        }.get(action.kind)
        if handler is None:
            raise InvalidConfig(f"unknown action kind {action.kind!r}")
        handler(action)

    def _resolve_amount(self, value) -> int:
        if isinstance(value, int):
            return value
        quantum = self.profile.quantum
        units = Rat.parse(str(value))
        quanta = units / quantum
        if not quanta.is_integer:
            raise InvalidConfig(f"amount {value} is not a whole number of quanta")
        return quanta.num

    def _build_variant(self, action: Action) -> ledger.Variant:
        kind = action.param("variant", "ordinary")
        if kind == "ordinary":
            return ledger.Ordinary()
        if kind == "future":
            return ledger.Future(int(action.param("activation_height", 0)))
        if kind == "conditional":
            return ledger.ConditionalFuture()
        raise InvalidConfig(f"unsupported transfer variant {kind!r}")

    def _do_transfer(self, action: Action) -> None:
        sender = self.participants[action.param("from")]
        receiver = self.participants[action.param("to")]
        amount = self._resolve_amount(action.param("amount"))
        fee = int(action.param("fee", self.profile.min_fee))
        address = sender.constructor.address
        balance = sender.view.state.balance(address)
        if balance < amount + fee:
            self.metrics.action_failures.append(
                {"action": "transfer", "from": sender.spec.id, "reason": "insufficient-funds"}
            )
            self._record("action-failed", what="transfer", reason="insufficient-funds")
            return
        tx = sender.constructor.build(
            [(address, amount + fee)],
            [(receiver.constructor.address, amount)],
            fee,
            self._fresh_nonce(),
            self._build_variant(action),
        )
        txid = ledger.tx_id(tx, self.profile.digest_len)
        self._latency_watch[txid] = (sender.spec.id, self.now)
        sender.input.offer_tx(tx)
        sender.placement.place(tx, self.now)
        self._record("transfer-placed", tx=txid.hex()[:16])

    def _do_partition(self, action: Action) -> None:
        groups = tuple(frozenset(g) for g in action.param("groups"))
        heal = action.param("heal")
        if not isinstance(heal, Rat):
            heal = Rat.parse(str(heal))
        self._partitions.append((groups, heal))
        self.queue.push(heal, ("heal", groups))
        self._record("partition", groups=[sorted(g) for g in groups], heal=str(heal))

    def _handle_heal(self, groups) -> None:
        self._record("heal")
        for pid, part in self.participants.items():
            if len(part.view) > 0 and not part.private_mode:
                self._broadcast(pid, ("chain", tuple(part.view.blocks)))

    def _do_deposit(self, action: Action) -> None:
        funder = self.participants[action.param("from")]
        claimant = action.param("user")
        service_id = self.participants[claimant].spec.service
        service_part = self.participants[service_id]
        amount = self._resolve_amount(action.param("amount"))
        fee = int(action.param("fee", self.profile.min_fee))
        address = funder.constructor.address
        if funder.view.state.balance(address) < amount + fee:
            self.metrics.action_failures.append({"action": "deposit", "reason": "insufficient-funds"})
            return
        tx = funder.constructor.build(
            [(address, amount + fee)], [(service_part.constructor.address, amount)], fee, self._fresh_nonce()
        )
        txid = ledger.tx_id(tx, self.profile.digest_len)
        self._pending_deposits.append((txid, service_id, claimant, amount))
        funder.input.offer_tx(tx)
        funder.placement.place(tx, self.now)

    def _do_withdraw(self, action: Action) -> None:
        claimant = action.param("user")
        to = self.participants[action.param("to")]
        service_id = self.participants[claimant].spec.service
        service_part = self.participants[service_id]
        service = self.services[service_id]
        amount = self._resolve_amount(action.param("amount"))
        fee = int(action.param("fee", self.profile.min_fee))
        try:
            service.debit_withdrawal(claimant, amount)
        except ServiceError as exc:
            self.metrics.action_failures.append({"action": "withdraw", "reason": exc.code})
            return
        address = service_part.constructor.address
        tx = service_part.constructor.build(
            [(address, amount + fee)], [(to.constructor.address, amount)], fee, self._fresh_nonce()
        )
        service_part.input.offer_tx(tx)
        service_part.placement.place(tx, self.now)
        self._record("withdraw", service=service_id, claimant=claimant, amount=amount)

    def _do_claim_transfer(self, action: Action) -> None:
        claimant = action.param("user")
        receiver = action.param("to_user")
        service_id = self.participants[claimant].spec.service
        service = self.services[service_id]
        amount = self._resolve_amount(action.param("amount"))
        try:
            service.transfer_claim(claimant, receiver, amount)
        except ServiceError as exc:
            self.metrics.action_failures.append({"action": "claim_transfer", "reason": exc.code})
            return
        self._record("claim-transfer", service=service_id, amount=amount)

    def _do_audit_services(self, action: Action) -> None:
        for service_id, service in sorted(self.services.items()):
            part = self.participants[service_id]
            balance = part.view.state.balance(part.constructor.address)
            self.metrics.service_audits.append(
                {
                    "service": service_id,
                    "claims": service.total_claims(),
                    "holdings": balance,
                    "solvent": service.solvent(balance),
                }
            )

    # -- main loop --------------------------------------------------------------------

    def run(self) -> SimResult:
        while self.queue and self._running:
            event = self.queue.pop()
            if self.config.stop_time is not None and event.time > self.config.stop_time:
                break
            self.now = event.time
            payload = event.payload
            kind = payload[0]
            if kind == "mined":
                self._handle_mined(payload[1], payload[2])
            elif kind == "deliver":
                self._handle_deliver(payload[1], payload[2], payload[3])
            elif kind == "action":
                self._handle_action(payload[1])
            elif kind == "heal":
                self._handle_heal(payload[1])

        self._resolve_attack()
        if self._forked_since is not None:
            self.metrics.fork_durations.append(self.now - self._forked_since)

        for pid, part in self.participants.items():
            self.metrics.final_tips[pid] = part.view.tip_id.hex()

        self._credit_earnings()
        self._observe_promises()

        digest = hashlib.sha256()
        for record in self.trace:
            digest.update(json.dumps(record, sort_keys=True).encode())
            digest.update(b"\n")
        views = {pid: part.view for pid, part in self.participants.items()}
        return SimResult(
            config=self.config,
            views=views,
            metrics=self.metrics,
            trace=self.trace,
            trace_digest=digest.hexdigest(),
        )

    def _credit_earnings(self) -> None:
        counts: dict[bytes, int] = {}
        for part in self.participants.values():
            counts[part.view.tip_id] = counts.get(part.view.tip_id, 0) + 1
        if not counts:
            return
        majority_tip = max(counts, key=lambda t: (counts[t], t))
        majority = None
        for part in self.participants.values():
            if part.view.tip_id == majority_tip:
                majority = part.view
                break
        if majority is None or len(majority) == 0:
            return
        by_address = {
            part.constructor.address: pid
            for pid, part in self.participants.items()
            if part.constructor.addresses()
        }
        for height, block in enumerate(majority.blocks):
            pool_before = majority.state_before(height).penalty_pool
            earned = block.step.g + block.step.h + pool_before
            pid = by_address.get(block.step.d)
            if pid is not None:
                self.metrics.miner_earnings[pid] = self.metrics.miner_earnings.get(pid, 0) + earned

    def _observe_promises(self) -> None:
        if not self.config.promises:
            return
        from . import promises as promise_engine

        registry = promise_engine.PromiseRegistry(
            population=frozenset(p.id for p in self.participants), confirmation_threshold=1
        )
        for declaration in self.config.promises:
            registry.declare(promise_engine.promise_from_dict(declaration))
        majority = None
        counts: dict[bytes, int] = {}
        for part in self.participants.values():
            counts[part.view.tip_id] = counts.get(part.view.tip_id, 0) + 1
        majority_tip = max(counts, key=lambda t: (counts[t], t))
        for part in self.participants.values():
            if part.view.tip_id == majority_tip:
                majority = part.view
                break
        events = promise_engine.events_from_chain(majority, final_time=self.now)
        registry.observe(events)
        for promise in registry.promises():
            self.metrics.promise_statuses.append(
                {"id": promise.registry_id, "promiser": promise.promiser, "status": promise.status}
            )


def run(config: ScenarioConfig) -> SimResult:
    """Run a scenario to completion; same config and seed, same trace digest."""
    return Simulation(config).run()
