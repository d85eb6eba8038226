"""Chain selection, confirmation counting, fork detection, checkpoints.

Every participant holds a :class:`ChainView`: the validated block sequence
from genesis with the ledger state after each block.  Competing suffixes
win only when their summed difficulty exceeds the replaced suffix's by the
configured margin; ties keep what arrived first, and nothing at or beyond
the checkpoint depth is ever replaced.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .crypto import Signer, get_signer
from .ledger import Block, BlockRejected, LedgerState, apply_block, block_id, tx_id
from .meadow import Rat
from .profiles import MoneyProfile

__all__ = ["ChainView", "Decision", "ForkReport", "choose", "confirmations", "detect_forks"]

KEEP = "keep"
EXTEND = "extend"
REPLACE = "replace"


@dataclass(frozen=True)
class Decision:
    """Outcome of offering a candidate to a view."""

    action: str            # keep | extend | replace
    depth: int = 0         # blocks dropped on replace
    reason: Optional[str] = None


@dataclass(frozen=True)
class ForkReport:
    tips: dict  # tip digest -> height
    common_ancestor_height: int
    partitions: dict  # tip digest -> sorted participant ids

    @property
    def is_fork(self) -> bool:
        return len(self.tips) > 1


class ChainView:
    """A participant's validated copy of the blockchain.

    Maintains per-height states incrementally; the sum of per-block
    difficulties is the weight used for replacement decisions.
    """

    def __init__(self, profile: MoneyProfile, signer: Optional[Signer] = None):
        self.profile = profile
        self.signer = signer or get_signer(profile.signer)
        self.blocks: list[Block] = []
        self.block_ids: list[bytes] = []
        self.states: list[LedgerState] = []
        self._tx_heights: dict[bytes, int] = {}

    # -- inspection ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    @property
    def tip_id(self) -> bytes:
        return self.block_ids[-1] if self.block_ids else b""

    @property
    def state(self) -> LedgerState:
        return self.states[-1] if self.states else LedgerState()

    @property
    def total_difficulty(self) -> int:
        return sum(b.step.m for b in self.blocks)

    def state_before(self, height: int) -> LedgerState:
        return self.states[height - 1] if height > 0 else LedgerState()

    def difficulty_of_suffix(self, from_height: int) -> int:
        return sum(b.step.m for b in self.blocks[from_height:])

    # -- growth ---------------------------------------------------------------

    def append(self, block: Block) -> None:
        """Validate and append a block at the tip; raises BlockRejected."""
        height = len(self.blocks)
        if height > 0 and block.prev != self.tip_id:
            raise BlockRejected("(e)", "predecessor digest does not match the tip")
        state = apply_block(self.state, block, height, self.profile, self.signer)
        self.blocks.append(block)
        self.block_ids.append(block_id(block, self.profile.digest_len))
        self.states.append(state)
        for tx in block.txs:
            self._tx_heights[tx_id(tx, self.profile.digest_len)] = height

    def _rebuild_tx_heights(self) -> None:
        self._tx_heights = {}
        for height, block in enumerate(self.blocks):
            for tx in block.txs:
                self._tx_heights[tx_id(tx, self.profile.digest_len)] = height

    def replace_suffix(self, fork_height: int, candidate: Sequence[Block]) -> None:
        """Drop blocks from ``fork_height`` on and append the candidate
        blocks.  Caller is responsible for having validated the candidate
        (see :func:`choose`)."""
        del self.blocks[fork_height:]
        del self.block_ids[fork_height:]
        del self.states[fork_height:]
        self._rebuild_tx_heights()
        for block in candidate:
            self.append(block)

    def clone(self) -> "ChainView":
        other = ChainView(self.profile, self.signer)
        other.blocks = list(self.blocks)
        other.block_ids = list(self.block_ids)
        other.states = list(self.states)
        other._tx_heights = dict(self._tx_heights)
        return other


def choose(view: ChainView, candidate: Sequence[Block] | Block, apply: bool = True) -> Decision:
    """Evaluate a candidate block or chain suffix against a view.

    Appending at the tip extends.  A competing suffix replaces the current
    one only when its total difficulty strictly exceeds ``(1 + epsilon)``
    times the replaced difficulty; equal weight keeps the first-received
    chain, and forks reaching at or below the checkpoint depth are refused.
    With ``apply=True`` the view is updated in place when the decision says
    so; the decision is returned either way.
    """
    if isinstance(candidate, Block):
        candidate = [candidate]
    candidate = list(candidate)
    if not candidate:
        return Decision(KEEP, reason="invalid-candidate: empty")

    first = candidate[0]
    fork_height = first.k
    for i, block in enumerate(candidate):
        if block.k != fork_height + i:
            return Decision(KEEP, reason="invalid-candidate: non-consecutive sequence numbers")

    if fork_height > len(view):
        return Decision(KEEP, reason="invalid-candidate: detached from known chain")
    if fork_height == 0:
        if len(view) > 0 and first.prev != b"":
            return Decision(KEEP, reason="invalid-candidate: bad genesis")
    elif first.prev != view.block_ids[fork_height - 1]:
        return Decision(KEEP, reason="invalid-candidate: predecessor digest mismatch")

    # checkpoint freeze: blocks buried deeper than the checkpoint depth are immutable
    replaced = view.blocks[fork_height:]
    if replaced and view.profile.checkpoint_depth is not None:
        deepest_replaced_depth = view.height - fork_height
        if deepest_replaced_depth >= view.profile.checkpoint_depth:
            return Decision(KEEP, reason="below-checkpoint")

    # validate the candidate suffix in isolation
    trial_state = view.state_before(fork_height)
    for i, block in enumerate(candidate):
        try:
            trial_state = apply_block(trial_state, block, fork_height + i, view.profile, view.signer)
        except BlockRejected as exc:
            return Decision(KEEP, reason=f"invalid-candidate: {exc}")
        if i + 1 < len(candidate):
            expected_prev = block_id(block, view.profile.digest_len)
            if candidate[i + 1].prev != expected_prev:
                return Decision(KEEP, reason="invalid-candidate: broken suffix linkage")

    if not replaced:
        # pure extension at the tip
        if apply:
            for block in candidate:
                view.append(block)
        return Decision(EXTEND)

    replaced_difficulty = view.difficulty_of_suffix(fork_height)
    candidate_difficulty = sum(b.step.m for b in candidate)
    threshold = (Rat(1) + view.profile.epsilon) * Rat(replaced_difficulty)
    if Rat(candidate_difficulty) > threshold:
        if apply:
            view.replace_suffix(fork_height, candidate)
        return Decision(REPLACE, depth=len(replaced))
    return Decision(KEEP, reason="not-heavier")


def confirmations(view: ChainView, txid: bytes) -> int:
    """Blocks at or after the one containing the transaction; 0 if absent."""
    height = view._tx_heights.get(txid)
    if height is None:
        return 0
    return len(view) - height


def detect_forks(views: Mapping[object, ChainView]) -> ForkReport:
    """Aggregate the participants' views into a fork report.

    The report is empty (single tip) exactly when all views share one tip;
    otherwise it lists each distinct tip with its height, who sits on it,
    and the height of the deepest block common to all views.
    """
    tips: dict[bytes, int] = {}
    partitions: dict[bytes, list] = {}
    for pid in sorted(views, key=repr):
        view = views[pid]
        tips[view.tip_id] = view.height
        partitions.setdefault(view.tip_id, []).append(pid)

    id_lists = [view.block_ids for view in views.values()]
    common = -1
    if id_lists:
        for level in range(min(len(ids) for ids in id_lists)):
            first = id_lists[0][level]
            if all(ids[level] == first for ids in id_lists):
                common = level
            else:
                break
    return ForkReport(tips=tips, common_ancestor_height=common, partitions=partitions)
