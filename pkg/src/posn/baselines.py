"""Leader election for the two comparison protocols.

PoR picks the validator with the smallest VRF value over the slot beacon
data; PoB samples proportionally to externally supplied contribution
scores. Everything else (snapshotting, proposing, voting, quorum
finality, rewards) is shared with the main protocol, so performance
differences come from election latency overheads alone, which is the
point of the comparison. These are minimal readings of the source
protocols, not reconstructions; orderings measured against them are
configuration-dependent by nature.
"""

from __future__ import annotations

from typing import Callable, Optional

from . import crypto
from .consensus import ElectionResult, Keyring
from .core import Config, PosnError, ValidatorId, u64
from .kernels import Stream, stream_key

# mapping ValidatorId -> non-negative score; normalized at sampling time
ContributionScore = dict[ValidatorId, float]


class AllZeroScores(PosnError):
    pass


def beacon_data(slot: int, parent_hash: bytes) -> bytes:
    return b"posn-beacon" + u64(slot) + parent_hash


def por_elect(slot: int, parent_hash: bytes,
              validators: tuple[ValidatorId, ...],
              keys: Keyring) -> ValidatorId:
    """Smallest VRF value over (slot, parent) wins; verifiable by anyone
    holding the public keys."""
    data = beacon_data(slot, parent_hash)
    return min(validators,
               key=lambda v: (crypto.vrf_eval(keys.sk(v.index), data).value,
                              v.index))


def pob_elect(slot: int, scores: ContributionScore,
              seed: int) -> ValidatorId:
    """Score-proportional sampling, deterministic per (seed, slot).

    Scaling all scores by a common power of two provably keeps the pick
    identical; other common factors do up to float rounding.
    """
    ordered = sorted(scores.items(), key=lambda kv: kv[0].index)
    total = sum(s for _, s in ordered)
    if total <= 0.0 or any(s < 0.0 for _, s in ordered):
        raise AllZeroScores("scores must be non-negative and not all zero")
    u = Stream(stream_key(u64(seed), b"pob", u64(slot))).next_float()
    target = u * total
    acc = 0.0
    for vid, s in ordered:
        acc += s
        if target < acc:
            return vid
    return ordered[-1][0]


def uniform_scores(validators: tuple[ValidatorId, ...]) -> ContributionScore:
    return {v: 1.0 for v in validators}


def make_elector(protocol: str, cfg: Config, keys: Keyring,
                 scores: Optional[ContributionScore] = None
                 ) -> Callable[[int, bytes], ElectionResult]:
    """Baseline election hook for the node state machine: returns a
    degenerate ElectionResult (fire step 0, no tie) naming the leader."""
    if protocol == "por":
        def elect(slot: int, parent_hash: bytes) -> ElectionResult:
            leader = por_elect(slot, parent_hash, keys.validators, keys)
            return ElectionResult(leader=leader, fire_step=0,
                                  tie_set=frozenset((leader,)),
                                  vrf_used=False)
        return elect
    if protocol == "pob":
        table = scores if scores is not None else uniform_scores(keys.validators)

        def elect(slot: int, parent_hash: bytes) -> ElectionResult:
            leader = pob_elect(slot, table, cfg.master_seed)
            return ElectionResult(leader=leader, fire_step=0,
                                  tie_set=frozenset((leader,)),
                                  vrf_used=False)
        return elect
    raise ValueError(f"no baseline elector for protocol {protocol!r}")
