"""Price-driven demand of applications and users, plus bid shaping.

Given a shadow price p, each application demands the rate maximizing
weight * ln U(r + c) - p * (r + c). Because ln U is strictly concave,
the first-order condition weight * (ln U)'(r + c) = p has at most one
root and bisection on the derivative is exact and fast. A user's demand
is the sum of its applications' demands at price p / beta, optionally
clipped by an aggregate cap.

Bids are price times demanded rate, smoothed between rounds by an
exponentially shrinking step so the fixed-point iteration of the
bidding protocol cannot oscillate forever.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import DomainError, SolverError
from .utility import Application, UserProfile


@dataclass(frozen=True)
class BisectionSettings:
    """Tolerances shared by the rate-domain bisection solvers."""

    abs_tol: float = 1e-8
    max_iters: int = 200

    def __post_init__(self) -> None:
        if not (math.isfinite(self.abs_tol) and self.abs_tol > 0.0):
            raise DomainError(f"abs_tol must be positive, got {self.abs_tol!r}")
        if self.max_iters < 1:
            raise DomainError(f"max_iters must be at least 1, got {self.max_iters!r}")


class OffsetMode(Enum):
    """Whether demand objectives evaluate U at (rate + target) or at rate.

    WITH_OFFSETS is the abundant-capacity form where targets are already
    granted and utilities are evaluated above them; WITHOUT_OFFSETS is the
    scarce-capacity form where rates compete below the targets.
    """

    WITH_OFFSETS = "with_offsets"
    WITHOUT_OFFSETS = "without_offsets"


_DEFAULT_SETTINGS = BisectionSettings()
_MAX_BRACKET_DOUBLINGS = 60


def app_rate_at_price(
    app: Application,
    price: float,
    cap: float | None = None,
    offset_mode: OffsetMode = OffsetMode.WITH_OFFSETS,
    settings: BisectionSettings | None = None,
) -> float:
    """Rate maximizing weight * ln U(r + c) - price * (r + c) over [0, cap].

    c is the application's target offset under WITH_OFFSETS and 0
    otherwise. Zero-weight applications demand nothing.
    """
    if not (math.isfinite(price) and price > 0.0):
        raise DomainError(f"price must be positive, got {price!r}")
    if settings is None:
        settings = _DEFAULT_SETTINGS
    if app.weight == 0.0:
        return 0.0
    offset = app.offset if offset_mode is OffsetMode.WITH_OFFSETS else 0.0

    def excess(rate: float) -> float:
        return app.weight * app.utility.dlog_evaluate(rate + offset) - price

    # Demand collapses to 0 when the marginal value just above zero rate
    # is already below the price. With no offset the derivative blows up
    # at 0, so probe a hair inside the domain.
    probe = 0.0 if offset > 0.0 else settings.abs_tol
    if excess(probe) <= 0.0:
        return 0.0

    if cap is not None:
        if cap < 0.0:
            raise DomainError(f"cap must be nonnegative, got {cap!r}")
        if cap == 0.0:
            return 0.0
        if excess(cap) >= 0.0:
            return cap
        hi = cap
    else:
        hi = app.utility.rate_scale
        doublings = 0
        while excess(hi) > 0.0:
            hi *= 2.0
            doublings += 1
            if doublings > _MAX_BRACKET_DOUBLINGS:
                raise SolverError(
                    f"no finite demand bracket below rate {hi}", bracket=(0.0, hi)
                )

    lo = 0.0
    for _ in range(settings.max_iters):
        if hi - lo <= settings.abs_tol:
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        if not (lo < mid < hi):
            # Adjacent floats: for rates this large one ulp exceeds the
            # absolute tolerance, so this is as exact as it gets.
            return 0.5 * (lo + hi)
        if excess(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    raise SolverError(
        f"demand bisection did not reach tolerance {settings.abs_tol} "
        f"in {settings.max_iters} iterations",
        bracket=(lo, hi),
    )


def user_rate_at_price(
    user: UserProfile,
    price: float,
    user_cap: float | None = None,
    offset_mode: OffsetMode = OffsetMode.WITH_OFFSETS,
    settings: BisectionSettings | None = None,
) -> float:
    """Total rate the user demands at the given price.

    The subscription weight beta scales the whole log-utility sum, so it
    enters exactly as a price rescale and the uncapped problem separates
    into independent per-application solves. When an aggregate cap binds
    the user simply takes the cap: the capped optimum always exhausts it
    because marginal utilities stay positive.
    """
    if not (math.isfinite(price) and price > 0.0):
        raise DomainError(f"price must be positive, got {price!r}")
    if user_cap is not None and user_cap < 0.0:
        raise DomainError(f"user_cap must be nonnegative, got {user_cap!r}")
    per_app_price = price / user.beta
    total = sum(
        app_rate_at_price(app, per_app_price, None, offset_mode, settings)
        for app in user.apps
    )
    if user_cap is not None and total > user_cap:
        return user_cap
    return total


def damp_bid(proposed: float, prev: float, round_index: int, l1: float, l2: float) -> float:
    """Clamp a bid update to the shrinking step l1 * e^{-n / l2}.

    Moves from prev toward proposed, never past it, by at most the step
    for round n; once steps fall below the stop threshold the protocol's
    convergence test necessarily fires.
    """
    if round_index < 1:
        raise DomainError(f"round_index must be at least 1, got {round_index!r}")
    if not (l1 > 0.0 and l2 > 0.0):
        raise DomainError(f"damping constants must be positive, got l1={l1!r}, l2={l2!r}")
    step = l1 * math.exp(-round_index / l2)
    diff = proposed - prev
    if abs(diff) > step:
        return prev + math.copysign(step, diff)
    return proposed


def vip_bid(
    user: UserProfile,
    price: float,
    round_index: int,
    prev_bid: float,
    l1: float,
    l2: float,
    *,
    first_case: bool,
    settings: BisectionSettings | None = None,
) -> float:
    """One user's damped bid for the current round.

    Scarce capacity (first_case): demand is capped at the user's total
    target and the bid is price * rate. Abundant capacity: demand is
    uncapped, evaluated above the targets, and the bid covers both, i.e.
    price * (rate + total target). A user without targets reduces to the
    plain price * rate bid in either form.
    """
    if first_case:
        rate = user_rate_at_price(
            user,
            price,
            user_cap=user.total_target,
            offset_mode=OffsetMode.WITHOUT_OFFSETS,
            settings=settings,
        )
        proposed = price * rate
    else:
        rate = user_rate_at_price(
            user,
            price,
            user_cap=None,
            offset_mode=OffsetMode.WITH_OFFSETS,
            settings=settings,
        )
        proposed = price * (rate + user.total_target)
    return damp_bid(proposed, prev_bid, round_index, l1, l2)
