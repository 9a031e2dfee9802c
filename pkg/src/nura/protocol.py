"""First-stage bidding between users and the base station.

A deterministic synchronous-round simulation: the base station turns
the current bid vector into a shadow price (total bids / capacity),
every participating user answers with a damped bid built from its
demand at that price, and the loop stops once no bid moved by the
threshold delta. Final rates are bid / price, which makes the allocated
total exactly the capacity.

When the VIP users' aggregate target rates reach the capacity, only VIP
users participate and their demand is capped at their targets; regular
users are excluded and end with zero rate. Otherwise everyone bids,
with VIP bids carrying their targets on top of demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .errors import ContractError, DomainError, NonConvergenceError, ProtocolError
from .price_response import BisectionSettings, vip_bid
from .utility import UserProfile


class CaseFlag(Enum):
    """Capacity regime, fixed once per run from targets vs capacity."""

    TARGETS_EXCEED_CAPACITY = "targets_exceed_capacity"
    TARGETS_BELOW_CAPACITY = "targets_below_capacity"


@dataclass(frozen=True)
class ProtocolParams:
    """Tunables of the bidding loop.

    delta is the stop threshold on per-user bid change; l1, l2 shape the
    exponentially shrinking damping step l1 * e^{-n / l2}; w_init
    overrides the initial bid (default: capacity / participants, further
    limited to 0.4 * l1 * l2).  The limit matters: the damping schedule
    only allows about 0.86 * l1 * l2 of total bid movement after round 1,
    so a start point too far from the fixed point freezes short of it.
    """

    delta: float = 1e-3
    l1: float = 5.0
    l2: float = 10.0
    max_rounds: int = 10000
    w_init: float | None = None
    price_floor: float = 1e-9

    def __post_init__(self) -> None:
        if not (math.isfinite(self.delta) and self.delta > 0.0):
            raise DomainError(f"delta must be positive, got {self.delta!r}")
        if not (self.l1 > 0.0 and self.l2 > 0.0):
            raise DomainError(
                f"damping constants must be positive, got l1={self.l1!r}, l2={self.l2!r}"
            )
        if self.max_rounds < 2:
            raise DomainError(f"max_rounds must be at least 2, got {self.max_rounds!r}")
        if self.w_init is not None and not (math.isfinite(self.w_init) and self.w_init > 0.0):
            raise DomainError(f"w_init must be positive when given, got {self.w_init!r}")
        if not (math.isfinite(self.price_floor) and self.price_floor > 0.0):
            raise DomainError(f"price_floor must be positive, got {self.price_floor!r}")


@dataclass(frozen=True)
class RoundState:
    """Snapshot of one round: the bids received and the price they imply.

    Only participating users appear in bids; excluded users are absent,
    not zero. converged marks the stop round.
    """

    round_index: int
    bids: Mapping[str, float]
    price: float
    converged: bool


@dataclass(frozen=True)
class FirstStageResult:
    """Outcome of the bidding stage.

    rates covers every user of the scenario in declaration order;
    excluded users hold exactly 0.0. trace lists one RoundState per
    executed round including the stop round.
    """

    case: CaseFlag
    rates: Mapping[str, float]
    final_price: float
    trace: tuple[RoundState, ...] = field(repr=False)
    rounds_used: int


def determine_case(users: Sequence[UserProfile], capacity: float) -> CaseFlag:
    """Scarce capacity iff the VIP users' summed target rates reach it."""
    if not (math.isfinite(capacity) and capacity > 0.0):
        raise DomainError(f"capacity must be positive, got {capacity!r}")
    total = sum(user.total_target for user in users if user.is_vip)
    if total >= capacity:
        return CaseFlag.TARGETS_EXCEED_CAPACITY
    return CaseFlag.TARGETS_BELOW_CAPACITY


def enodeb_step(
    bids: Mapping[str, float],
    prev_bids: Mapping[str, float],
    capacity: float,
    params: ProtocolParams,
) -> float | None:
    """One base-station decision: None to stop, else the next shadow price.

    Stops when every participant's bid moved by less than delta since
    the previous round (absent previous bids count as 0). The price is
    total bids / capacity, floored so rate = bid / price stays defined
    even for an all-zero bid vector.
    """
    if not bids:
        raise ProtocolError("no participating users, cannot price an empty bid vector")
    if all(abs(bid - prev_bids.get(uid, 0.0)) < params.delta for uid, bid in bids.items()):
        return None
    return max(sum(bids.values()) / capacity, params.price_floor)


def run_first_stage(
    users: Sequence[UserProfile],
    capacity: float,
    params: ProtocolParams | None = None,
    settings: BisectionSettings | None = None,
) -> FirstStageResult:
    """Run the bidding loop to convergence and extract per-user rates.

    Synchronous rounds: price from current bids, then all participants
    respond, then repeat. Deterministic: identical inputs produce an
    identical trace. Raises NonConvergenceError (with the trace attached)
    if max_rounds passes without the stop test firing.
    """
    if params is None:
        params = ProtocolParams()
    if not (math.isfinite(capacity) and capacity > 0.0):
        raise DomainError(f"capacity must be positive, got {capacity!r}")
    if len({user.user_id for user in users}) != len(users):
        raise ContractError("user ids must be unique")

    case = determine_case(users, capacity)
    first_case = case is CaseFlag.TARGETS_EXCEED_CAPACITY
    if first_case:
        participants = [user for user in users if user.is_vip]
    else:
        participants = list(users)
    if not participants:
        raise ProtocolError("scenario has no participating users")

    if params.w_init is not None:
        w_init = params.w_init
    else:
        # Uniform start, but never above 0.4*l1*l2.  The schedule allows
        # about 0.86*l1*l2 of total movement after round 1, and a bid may
        # overshoot before turning around, so the start point must leave
        # most of that budget unspent or bids freeze short of the fixed
        # point once the steps shrink below delta.
        w_init = min(capacity / len(participants), 0.4 * params.l1 * params.l2)

    bids = {user.user_id: w_init for user in participants}
    prev = {user.user_id: 0.0 for user in participants}
    trace: list[RoundState] = []

    for round_index in range(1, params.max_rounds + 1):
        outcome = enodeb_step(bids, prev, capacity, params)
        if outcome is None:
            final_price = max(sum(bids.values()) / capacity, params.price_floor)
            trace.append(RoundState(round_index, dict(bids), final_price, True))
            rates = {
                user.user_id: (bids[user.user_id] / final_price if user.user_id in bids else 0.0)
                for user in users
            }
            return FirstStageResult(
                case=case,
                rates=rates,
                final_price=final_price,
                trace=tuple(trace),
                rounds_used=round_index,
            )
        price = outcome
        trace.append(RoundState(round_index, dict(bids), price, False))
        prev = bids
        bids = {
            user.user_id: vip_bid(
                user,
                price,
                round_index + 1,
                prev[user.user_id],
                params.l1,
                params.l2,
                first_case=first_case,
                settings=settings,
            )
            for user in participants
        }

    raise NonConvergenceError(
        f"bidding did not converge within {params.max_rounds} rounds "
        f"(delta={params.delta})",
        trace=trace,
        rounds=params.max_rounds,
    )


def trace_records(result: FirstStageResult) -> list[tuple[int, str, float, float]]:
    """Flatten a trace into (round, user_id, bid, price) rows.

    Rows are ordered by round, then by the participant order of the run.
    """
    rows: list[tuple[int, str, float, float]] = []
    for state in result.trace:
        for uid, bid in state.bids.items():
            rows.append((state.round_index, uid, bid, state.price))
    return rows
