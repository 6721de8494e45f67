"""Slot-based finality around first-spike leader election.

Each slot: nodes freeze a transaction snapshot, replay every validator's
neuron over it, and elect the earliest spiker (VRF value breaks ties).
The leader proposes a block; peers accept only what they can reproduce
bit-for-bit (spike replay, election, mempool ordering), vote once, and
finalize on a strict two-thirds quorum. Rewards, penalties for provable
misbehavior, and the per-node slot state machine live here too. The PoB
and PoR baselines swap only the election step and reuse the rest.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence, Union

from . import crypto
from .core import (Block, ChainState, Config, PenaltyEntry, PosnError,
                   Transaction, ValidatorId, Vote, append_block, hash_block,
                   select_mempool, u64)
from .neuro import SlotSeed, first_spike_step, make_slot_seed

# slot phases, in forward order; Skipped is the timeout exit
ENCODING = "Encoding"
SPIKING = "Spiking"
PROPOSAL = "Proposal"
VALIDATION = "Validation"
VOTING = "Voting"
FINALIZED = "Finalized"
SKIPPED = "Skipped"

LEADER_REWARD = "LeaderReward"
VOTE_REWARD = "VoteReward"
PENALTY = "Penalty"
REDISTRIBUTION = "Redistribution"


class NotLeader(PosnError):
    pass


class InvalidEvidence(PosnError):
    pass


@dataclass(frozen=True)
class ElectionResult:
    leader: ValidatorId
    fire_step: int
    tie_set: frozenset[ValidatorId]
    vrf_used: bool
    # winner's VRF output when vrf_used, so the proposer can attach it
    vrf_output: Optional[crypto.VrfOutput] = None


@dataclass(frozen=True)
class RewardEvent:
    slot: int
    recipient: ValidatorId
    amount: int
    kind: str


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: Optional[str] = None

    @classmethod
    def ok(cls) -> "Verdict":
        return cls(True, None)

    @classmethod
    def reject(cls, reason: str) -> "Verdict":
        return cls(False, reason)


@dataclass(frozen=True)
class Equivocation:
    """Two signed, distinct blocks for the same slot by the same proposer."""
    block_a: Block
    block_b: Block


@dataclass(frozen=True)
class ForgedSpike:
    """A signed block whose claimed fire step or leadership fails replay.

    Carries the spike-set snapshot and parent hash so the mismatch is
    reproducible by anyone holding the same keyring.
    """
    block: Block
    spike_txs: tuple[Transaction, ...]
    parent_hash: bytes


Evidence = Union[Equivocation, ForgedSpike]


class Keyring:
    """All validator keypairs of one simulated network, index-addressed.

    A real deployment would hold one secret key per process; the
    simulation keeps the full set so elections and VRF checks can be
    recomputed by any node, mirroring broadcast VRF proofs without
    modeling them as messages.
    """

    def __init__(self, master_seed: int, n: int):
        self.pairs = tuple(crypto.keygen(master_seed, i) for i in range(n))
        self.validators = tuple(ValidatorId(i, kp.pk)
                                for i, kp in enumerate(self.pairs))

    def __len__(self) -> int:
        return len(self.pairs)

    def sk(self, index: int) -> bytes:
        return self.pairs[index].sk

    def validator(self, index: int) -> ValidatorId:
        return self.validators[index]

    def known(self, vid: ValidatorId) -> bool:
        return (0 <= vid.index < len(self.validators)
                and self.validators[vid.index].pk == vid.pk)


# ---------------------------------------------------------------------------
# election
# ---------------------------------------------------------------------------

def quorum_threshold(n: int) -> int:
    """Smallest vote count strictly above two thirds of n."""
    return (2 * n) // 3 + 1


def election_data(slot: int, parent_hash: bytes) -> bytes:
    return b"posn-elect" + u64(slot) + parent_hash


def elect_leader(fire_steps: dict[ValidatorId, Optional[int]], slot: int,
                 parent_hash: bytes, keys: Keyring) -> Optional[ElectionResult]:
    """Earliest spiker wins; among simultaneous spikers the smallest VRF
    value over (slot, parent) wins. None when nobody fired."""
    fired = [(step, vid) for vid, step in fire_steps.items() if step is not None]
    if not fired:
        return None
    best = min(step for step, _ in fired)
    tied = sorted((vid for step, vid in fired if step == best),
                  key=lambda v: v.index)
    if len(tied) == 1:
        return ElectionResult(leader=tied[0], fire_step=best,
                              tie_set=frozenset(tied), vrf_used=False)
    data = election_data(slot, parent_hash)
    outs = {vid: crypto.vrf_eval(keys.sk(vid.index), data) for vid in tied}
    winner = min(tied, key=lambda v: (outs[v].value, v.index))
    return ElectionResult(leader=winner, fire_step=best,
                          tie_set=frozenset(tied), vrf_used=True,
                          vrf_output=outs[winner])


def propose(leader: ValidatorId, sk: bytes, slot: int, parent_hash: bytes,
            mempool: Sequence[Transaction], election: ElectionResult,
            cfg: Config) -> Block:
    """Build and sign the leader's block for this slot."""
    if leader != election.leader:
        raise NotLeader(f"validator {leader.index} did not win slot {slot}")
    block = Block(slot=slot, proposer=leader, parent_hash=parent_hash,
                  txs=select_mempool(mempool, cfg.max_block_txs),
                  claimed_fire_step=election.fire_step,
                  vrf_output=election.vrf_output if election.vrf_used else None)
    sig = crypto.sign(sk, block.core_bytes())
    return replace(block, proposer_signature=sig)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def check_signatures(block: Block, keys: Keyring) -> Optional[str]:
    if not keys.known(block.proposer):
        return "UnknownProposer"
    if block.proposer_signature is None or not crypto.verify(
            block.proposer.pk, block.core_bytes(), block.proposer_signature):
        return "BadBlockSignature"
    for tx in block.txs:
        if not crypto.verify(tx.sender, tx.signing_bytes(), tx.signature):
            return "BadTxSignature"
    return None


def compute_fire_steps(validators: Sequence[ValidatorId],
                       spike_txs: Sequence[Transaction], seed: SlotSeed,
                       cfg: Config) -> dict[ValidatorId, Optional[int]]:
    return {vid: first_spike_step(vid, spike_txs, seed, cfg)
            for vid in validators}


def validate_proposal(block: Block, slot: int, parent_hash: bytes,
                      snapshot: Sequence[Transaction], cfg: Config,
                      keys: Keyring,
                      election: Optional[ElectionResult] = None,
                      seed: Optional[SlotSeed] = None,
                      spike_txs: Optional[tuple[Transaction, ...]] = None
                      ) -> Verdict:
    """Replay-based acceptance, first failed check wins: signatures,
    parent link, spike replay, election, mempool ordering.

    `election`/`seed`/`spike_txs` may carry the caller's already-computed
    slot context; they are recomputed from the snapshot when absent.
    """
    bad = check_signatures(block, keys)
    if bad is not None:
        return Verdict.reject(bad)
    if block.slot != slot:
        return Verdict.reject("WrongSlot")
    if block.parent_hash != parent_hash:
        return Verdict.reject("ParentMismatch")

    if spike_txs is None:
        spike_txs = select_mempool(snapshot, cfg.spike_snapshot_cap)
    if seed is None:
        seed = make_slot_seed(parent_hash, slot, spike_txs)
    replayed = first_spike_step(block.proposer, spike_txs, seed, cfg)
    if replayed is None or replayed != block.claimed_fire_step:
        return Verdict.reject("SpikeMismatch")

    if election is None:
        steps = compute_fire_steps(keys.validators, spike_txs, seed, cfg)
        election = elect_leader(steps, slot, parent_hash, keys)
    if election is None or election.leader != block.proposer:
        return Verdict.reject("NotElected")
    if election.vrf_used:
        if block.vrf_output is None or not crypto.vrf_verify(
                block.proposer.pk, election_data(slot, parent_hash),
                block.vrf_output):
            return Verdict.reject("VrfMismatch")

    if block.txs != select_mempool(snapshot, cfg.max_block_txs):
        return Verdict.reject("MempoolMismatch")
    return Verdict.ok()


def collect_votes(votes: Iterable[Vote], block_hash: bytes, n: int,
                  keys: Keyring) -> tuple[bool, tuple[Vote, ...]]:
    """Valid, per-voter-deduplicated votes on one block; finalized when
    they reach the quorum threshold."""
    seen: dict[int, Vote] = {}
    for v in votes:
        if v.block_hash != block_hash or not keys.known(v.voter):
            continue
        if v.voter.index in seen:
            continue
        if crypto.verify(v.voter.pk, v.signing_bytes(), v.signature):
            seen[v.voter.index] = v
    quorum = tuple(seen.values())
    return len(quorum) >= quorum_threshold(n), quorum


def make_vote(voter: ValidatorId, sk: bytes, slot: int,
              block_hash: bytes) -> Vote:
    draft = Vote(slot=slot, block_hash=block_hash, voter=voter,
                 signature=crypto.Signature(b"\x00" * 32))
    return replace(draft, signature=crypto.sign(sk, draft.signing_bytes()))


# ---------------------------------------------------------------------------
# rewards and penalties
# ---------------------------------------------------------------------------

def distribute_rewards(chain: ChainState, block: Block,
                       quorum: Sequence[Vote],
                       cfg: Config) -> tuple[RewardEvent, ...]:
    """One leader reward (base + fees) plus one vote reward per quorum
    member, voters in index order."""
    fees = sum(tx.fee for tx in block.txs)
    events = [RewardEvent(slot=block.slot, recipient=block.proposer,
                          amount=cfg.r_base + fees, kind=LEADER_REWARD)]
    voters = sorted({v.voter for v in quorum}, key=lambda v: v.index)
    events.extend(RewardEvent(slot=block.slot, recipient=vid,
                              amount=cfg.r_vote, kind=VOTE_REWARD)
                  for vid in voters)
    return tuple(events)


def verify_evidence(evidence: Evidence, cfg: Config, keys: Keyring) -> None:
    """Raise InvalidEvidence unless the evidence is self-proving."""
    if isinstance(evidence, Equivocation):
        a, b = evidence.block_a, evidence.block_b
        if a.slot != b.slot or a.proposer != b.proposer:
            raise InvalidEvidence("blocks differ in slot or proposer")
        if hash_block(a) == hash_block(b):
            raise InvalidEvidence("blocks are identical")
        for blk in (a, b):
            if not keys.known(blk.proposer):
                raise InvalidEvidence("unknown proposer")
            if blk.proposer_signature is None or not crypto.verify(
                    blk.proposer.pk, blk.core_bytes(), blk.proposer_signature):
                raise InvalidEvidence("bad block signature")
        return
    if isinstance(evidence, ForgedSpike):
        blk = evidence.block
        if not keys.known(blk.proposer):
            raise InvalidEvidence("unknown proposer")
        if blk.proposer_signature is None or not crypto.verify(
                blk.proposer.pk, blk.core_bytes(), blk.proposer_signature):
            raise InvalidEvidence("bad block signature")
        seed = make_slot_seed(evidence.parent_hash, blk.slot,
                              evidence.spike_txs)
        replayed = first_spike_step(blk.proposer, evidence.spike_txs, seed, cfg)
        if replayed is not None and replayed == blk.claimed_fire_step:
            steps = compute_fire_steps(keys.validators, evidence.spike_txs,
                                       seed, cfg)
            election = elect_leader(steps, blk.slot, evidence.parent_hash, keys)
            if election is not None and election.leader == blk.proposer:
                raise InvalidEvidence("replay matches the claim")
        return
    raise InvalidEvidence(f"unknown evidence type {type(evidence).__name__}")


def evidence_key(evidence: Evidence) -> tuple[str, int, int]:
    """(reason, offender index, slot) identity used for deduplication."""
    if isinstance(evidence, Equivocation):
        return ("equivocation", evidence.block_a.proposer.index,
                evidence.block_a.slot)
    return ("forged_spike", evidence.block.proposer.index, evidence.block.slot)


def apply_penalty(chain: ChainState, evidence: Evidence, cfg: Config,
                  keys: Keyring) -> tuple[ChainState, tuple[RewardEvent, ...]]:
    """Penalize a proven offense: balance cut, burned by default or split
    across the other validators when cfg.penalty_redistribute is set.
    Idempotent per (offense, offender, slot); invalid evidence raises and
    changes nothing."""
    verify_evidence(evidence, cfg, keys)
    reason, offender, slot = evidence_key(evidence)
    for entry in chain.penalties_log:
        if (entry.reason, entry.validator, entry.slot) == (reason, offender, slot):
            return chain, ()
    amount = (cfg.penalty_equivocation if reason == "equivocation"
              else cfg.penalty_forged_spike)
    balances = dict(chain.balances)
    balances[offender] = balances.get(offender, 0) - amount
    events = [RewardEvent(slot=slot, recipient=keys.validator(offender),
                          amount=-amount, kind=PENALTY)]
    burned = amount
    if cfg.penalty_redistribute and cfg.n_validators > 1:
        others = [i for i in range(cfg.n_validators) if i != offender]
        share = amount // len(others)
        if share > 0:
            for i in others:
                balances[i] = balances.get(i, 0) + share
                events.append(RewardEvent(slot=slot,
                                          recipient=keys.validator(i),
                                          amount=share, kind=REDISTRIBUTION))
            burned = amount - share * len(others)
    entry = PenaltyEntry(validator=offender, slot=slot, amount=amount,
                         reason=reason)
    chain = replace(chain, balances=balances,
                    penalties_log=chain.penalties_log + (entry,),
                    total_burned=chain.total_burned + burned)
    return chain, tuple(events)


# ---------------------------------------------------------------------------
# protocol messages
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TxGossip:
    tx: Transaction
    # injection time plus the worst-case delivery delay; nodes admit a tx
    # into a slot snapshot only once every peer is guaranteed to have it
    eligible_ms: float


@dataclass(frozen=True)
class Proposal:
    block: Block


@dataclass(frozen=True)
class VoteMsg:
    vote: Vote


@dataclass(frozen=True)
class EvidenceMsg:
    evidence: Evidence


@dataclass(frozen=True)
class FinalizeMsg:
    """Finalization announcement: block plus its quorum certificate, so
    nodes whose own vote collection fell short can still append."""
    block: Block
    votes: tuple[Vote, ...]


Payload = Union[TxGossip, Proposal, VoteMsg, EvidenceMsg, FinalizeMsg]

BROADCAST = None


@dataclass(frozen=True)
class Outgoing:
    send_at: float
    payload: Payload
    dest: Optional[int] = BROADCAST  # validator index, None = everyone


# context computed once per (slot, parent, spike set); the harness passes
# a memoized lookup since every honest node derives identical values
@dataclass(frozen=True)
class SlotContext:
    seed: SlotSeed
    fire_steps: dict[ValidatorId, Optional[int]]
    election: Optional[ElectionResult]


ReplayFn = Callable[[int, bytes, tuple[Transaction, ...]], SlotContext]


def compute_slot_context(slot: int, parent_hash: bytes,
                         spike_txs: tuple[Transaction, ...], cfg: Config,
                         keys: Keyring) -> SlotContext:
    seed = make_slot_seed(parent_hash, slot, spike_txs)
    steps = compute_fire_steps(keys.validators, spike_txs, seed, cfg)
    return SlotContext(seed=seed, fire_steps=steps,
                       election=elect_leader(steps, slot, parent_hash, keys))


# ---------------------------------------------------------------------------
# node state machine
# ---------------------------------------------------------------------------

@dataclass
class _SlotState:
    """Everything scoped to the slot in progress."""
    slot: int = -1
    started_ms: float = 0.0
    snapshot: tuple[Transaction, ...] = ()
    spike_txs: tuple[Transaction, ...] = ()
    ctx: Optional[SlotContext] = None
    proposals: dict[int, dict[bytes, Block]] = field(default_factory=dict)
    relayed: set[bytes] = field(default_factory=set)
    votes: dict[bytes, list[Vote]] = field(default_factory=dict)
    voted_indices: set[int] = field(default_factory=set)
    own_vote_hash: Optional[bytes] = None
    validated: dict[bytes, Verdict] = field(default_factory=dict)
    finalized: bool = False
    finalize_ms: Optional[float] = None
    quorum_size: int = 0
    announced: bool = False


class Node:
    """One validator's event-driven state machine.

    The harness drives it through begin_slot / on_message / end_slot and
    ships the returned Outgoing messages; nothing here touches the
    network or the clock directly, which keeps replays exact. Broadcasts
    are delivered back to the sender too, so a leader processes its own
    proposal through the same path as everyone else. Byzantine behavior
    is layered on top by the harness; this class is always the honest
    protocol.
    """

    def __init__(self, index: int, keys: Keyring, cfg: Config,
                 protocol: str = "posn",
                 replay: Optional[ReplayFn] = None,
                 elect_baseline: Optional[Callable[[int, bytes],
                                                   ElectionResult]] = None):
        if protocol != "posn" and elect_baseline is None:
            raise ValueError(f"protocol {protocol!r} needs elect_baseline")
        self.index = index
        self.keys = keys
        self.cfg = cfg
        self.protocol = protocol
        self.me = keys.validator(index)
        self.sk = keys.sk(index)
        self.chain = ChainState()
        self.mempool: dict[bytes, tuple[Transaction, float]] = {}
        self.finalized_ids: set[bytes] = set()
        self.finalized_slots: set[int] = set()
        self.slot = _SlotState()
        self.slot_records: list[dict] = []
        # every distinct proposal this node validated, with its verdict
        self.proposal_log: list[dict] = []
        # (parent_hash, spike_txs) for recent slots; forged-spike evidence
        # is honored only when it matches this local view
        self.slot_history: dict[int, tuple[bytes, tuple[Transaction, ...]]] = {}
        self.evidence_seen: set[tuple[str, int, int]] = set()
        self.penalty_events: list[RewardEvent] = []
        self.reward_events: list[RewardEvent] = []
        self.finalize_seen: set[tuple[int, bytes]] = set()
        self.pending_finalize: dict[bytes, tuple[Block, tuple[Vote, ...]]] = {}
        self.block_final_ms: dict[int, float] = {}
        self._replay = replay or (lambda s, p, txs: compute_slot_context(
            s, p, txs, self.cfg, self.keys))
        self._elect_baseline = elect_baseline

    # -- slot lifecycle ----------------------------------------------------

    def begin_slot(self, slot: int, now: float) -> list[Outgoing]:
        self.slot = _SlotState(slot=slot, started_ms=now)
        snapshot = [tx for tx, eligible in self.mempool.values()
                    if eligible <= now and tx.id not in self.finalized_ids]
        self.slot.snapshot = tuple(snapshot)
        if self.protocol == "posn":
            self.slot.spike_txs = select_mempool(snapshot,
                                                 self.cfg.spike_snapshot_cap)
            self.slot.ctx = self._replay(slot, self.chain.tip_hash,
                                         self.slot.spike_txs)
        else:
            self.slot.ctx = SlotContext(
                seed=make_slot_seed(self.chain.tip_hash, slot, ()),
                fire_steps={},
                election=self._elect_baseline(slot, self.chain.tip_hash))
        self.slot_history[slot] = (self.chain.tip_hash, self.slot.spike_txs)
        for old in [s for s in self.slot_history if s < slot - 3]:
            del self.slot_history[old]
        election = self.slot.ctx.election
        if election is not None and election.leader.index == self.index:
            return [self._make_proposal(now, election)]
        return []

    def _make_proposal(self, now: float, election: ElectionResult) -> Outgoing:
        block = propose(self.me, self.sk, self.slot.slot, self.chain.tip_hash,
                        self.slot.snapshot, election, self.cfg)
        if self.protocol == "posn":
            # the leader can only speak once its neuron has actually fired
            send_at = now + (election.fire_step + 1) * self.cfg.dt_ms
        else:
            send_at = now + self.cfg.overhead_ms(self.protocol)
        return Outgoing(send_at=send_at, payload=Proposal(block))

    def end_slot(self, slot: int, now: float) -> list[Outgoing]:
        if slot != self.slot.slot:
            return []
        election = self.slot.ctx.election if self.slot.ctx else None
        self.slot_records.append({
            "slot": slot,
            "outcome": FINALIZED if self.slot.finalized else SKIPPED,
            "leader": election.leader.index if election else None,
            "fire_step": election.fire_step if election else None,
            "tie_size": len(election.tie_set) if election else 0,
            "vrf_used": election.vrf_used if election else False,
            "quorum_size": self.slot.quorum_size,
            "n_block_txs": (len(self.chain.finalized[-1].txs)
                            if self.slot.finalized else 0),
            "finalize_ms": self.slot.finalize_ms,
        })
        self.evidence_seen = {k for k in self.evidence_seen
                              if k[2] >= slot - 3}
        return []

    # -- message handling --------------------------------------------------

    def on_message(self, now: float, payload: Payload) -> list[Outgoing]:
        if isinstance(payload, TxGossip):
            return self._on_tx(payload)
        if isinstance(payload, Proposal):
            return self._on_proposal(now, payload.block)
        if isinstance(payload, VoteMsg):
            return self._on_vote(now, payload.vote)
        if isinstance(payload, FinalizeMsg):
            return self._on_finalize(now, payload)
        if isinstance(payload, EvidenceMsg):
            return self._on_evidence(payload.evidence)
        return []

    def _on_tx(self, gossip: TxGossip) -> list[Outgoing]:
        tx = gossip.tx
        if tx.id in self.mempool or tx.id in self.finalized_ids:
            return []
        if not crypto.verify(tx.sender, tx.signing_bytes(), tx.signature):
            return []
        self.mempool[tx.id] = (tx, gossip.eligible_ms)
        return []

    def _on_proposal(self, now: float, block: Block) -> list[Outgoing]:
        if block.slot != self.slot.slot:
            return []
        out: list[Outgoing] = []
        block_hash = hash_block(block)
        per_proposer = self.slot.proposals.setdefault(block.proposer.index, {})
        first_sight = block_hash not in per_proposer
        if first_sight and len(per_proposer) < 2:
            per_proposer[block_hash] = block
        if len(per_proposer) == 2:
            a, b = list(per_proposer.values())
            out.extend(self._found_evidence(now, Equivocation(a, b)))

        # relay each distinct proposal once, so peers a selective sender
        # skipped still see it and equivocation becomes provable
        if first_sight and block_hash not in self.slot.relayed \
                and len(self.slot.relayed) < 4:
            self.slot.relayed.add(block_hash)
            out.append(Outgoing(send_at=now, payload=Proposal(block)))

        if block_hash not in self.slot.validated:
            verdict = self._validate(block)
            self.slot.validated[block_hash] = verdict
            self.proposal_log.append({
                "slot": block.slot, "proposer": block.proposer.index,
                "accepted": verdict.accepted, "reason": verdict.reason,
                "claimed_fire_step": block.claimed_fire_step})
            if not verdict.accepted and verdict.reason in ("SpikeMismatch",
                                                           "NotElected"):
                out.extend(self._found_evidence(now, ForgedSpike(
                    block=block, spike_txs=self.slot.spike_txs,
                    parent_hash=self.chain.tip_hash)))
            if verdict.accepted and self.slot.own_vote_hash is None \
                    and not self.slot.finalized:
                vote = make_vote(self.me, self.sk, self.slot.slot, block_hash)
                self.slot.own_vote_hash = block_hash
                out.append(Outgoing(send_at=now, payload=VoteMsg(vote)))
            # votes can outrun the proposal they refer to
            bucket = self.slot.votes.get(block_hash, ())
            if first_sight and not self.slot.finalized \
                    and len(bucket) >= quorum_threshold(self.cfg.n_validators):
                out.extend(self._append(now, block, tuple(bucket)))
        return out

    def _validate(self, block: Block) -> Verdict:
        ctx = self.slot.ctx
        if self.protocol == "posn":
            return validate_proposal(
                block, self.slot.slot, self.chain.tip_hash, self.slot.snapshot,
                self.cfg, self.keys, election=ctx.election, seed=ctx.seed,
                spike_txs=self.slot.spike_txs)
        bad = check_signatures(block, self.keys)
        if bad is not None:
            return Verdict.reject(bad)
        if block.slot != self.slot.slot:
            return Verdict.reject("WrongSlot")
        if block.parent_hash != self.chain.tip_hash:
            return Verdict.reject("ParentMismatch")
        if ctx.election is None or ctx.election.leader != block.proposer:
            return Verdict.reject("NotElected")
        if block.txs != select_mempool(self.slot.snapshot,
                                       self.cfg.max_block_txs):
            return Verdict.reject("MempoolMismatch")
        return Verdict.ok()

    def _matches_local_view(self, evidence: Evidence) -> bool:
        if isinstance(evidence, Equivocation):
            return True
        stored = self.slot_history.get(evidence.block.slot)
        return stored is not None and stored == (evidence.parent_hash,
                                                 evidence.spike_txs)

    def _found_evidence(self, now: float,
                        evidence: Evidence) -> list[Outgoing]:
        key = evidence_key(evidence)
        if key in self.evidence_seen:
            return []
        self.evidence_seen.add(key)
        try:
            self.chain, events = apply_penalty(self.chain, evidence, self.cfg,
                                               self.keys)
        except InvalidEvidence:
            return []
        self.penalty_events.extend(events)
        return [Outgoing(send_at=now, payload=EvidenceMsg(evidence))]

    def _on_evidence(self, evidence: Evidence) -> list[Outgoing]:
        key = evidence_key(evidence)
        if key in self.evidence_seen or not self._matches_local_view(evidence):
            return []
        self.evidence_seen.add(key)
        try:
            self.chain, events = apply_penalty(self.chain, evidence, self.cfg,
                                               self.keys)
        except InvalidEvidence:
            return []
        self.penalty_events.extend(events)
        return []

    def _on_vote(self, now: float, vote: Vote) -> list[Outgoing]:
        if vote.slot != self.slot.slot or self.slot.finalized:
            return []
        if vote.voter.index in self.slot.voted_indices:
            return []
        if not self.keys.known(vote.voter) or not crypto.verify(
                vote.voter.pk, vote.signing_bytes(), vote.signature):
            return []
        self.slot.voted_indices.add(vote.voter.index)
        bucket = self.slot.votes.setdefault(vote.block_hash, [])
        bucket.append(vote)
        if len(bucket) >= quorum_threshold(self.cfg.n_validators):
            for per_proposer in self.slot.proposals.values():
                if vote.block_hash in per_proposer:
                    return self._append(now, per_proposer[vote.block_hash],
                                        tuple(bucket))
        return []

    def _append(self, now: float, block: Block,
                votes: tuple[Vote, ...]) -> list[Outgoing]:
        if block.parent_hash != self.chain.tip_hash:
            self.pending_finalize[block.parent_hash] = (block, votes)
            return []
        events = distribute_rewards(self.chain, block, votes, self.cfg)
        self.chain = append_block(self.chain, block, votes, self.cfg)
        self.reward_events.extend(events)
        self.finalized_slots.add(block.slot)
        self.block_final_ms[block.slot] = now
        for tx in block.txs:
            self.finalized_ids.add(tx.id)
            self.mempool.pop(tx.id, None)
        out: list[Outgoing] = []
        if block.slot == self.slot.slot:
            self.slot.finalized = True
            self.slot.finalize_ms = now
            self.slot.quorum_size = len({v.voter.index for v in votes})
            if not self.slot.announced:
                self.slot.announced = True
                out.append(Outgoing(send_at=now,
                                    payload=FinalizeMsg(block, votes)))
        # a queued successor may now link up
        waiting = self.pending_finalize.pop(self.chain.tip_hash, None)
        if waiting is not None:
            out.extend(self._append(now, waiting[0], waiting[1]))
        return out

    def _on_finalize(self, now: float, msg: FinalizeMsg) -> list[Outgoing]:
        block_hash = hash_block(msg.block)
        key = (msg.block.slot, block_hash)
        if key in self.finalize_seen:
            return []
        self.finalize_seen.add(key)
        if msg.block.slot in self.finalized_slots:
            return []
        finalized, quorum = collect_votes(msg.votes, block_hash,
                                          self.cfg.n_validators, self.keys)
        if not finalized:
            return []
        if check_signatures(msg.block, self.keys) is not None:
            return []
        return self._append(now, msg.block, quorum)
