"""Second-stage split of one user's allocated rate among its applications.

Given the rate r_opt a user won in the bidding stage, find per-app
rates maximizing the weighted sum of log-utilities subject to the
budget. The dual view: each trial internal price p induces per-app
demands; total demand is nonincreasing in p, so bisection on p finds
the price where demand meets the budget.

Under scarce capacity the split competes below the targets (objective
on U(r), target-bearing apps capped at their targets). Under abundant
capacity every target is granted first and the objective works above
them (U(r + target)); returned rates then include the targets.

The sigmoid's marginal-value curve has a long flat stretch below the
inflection, where demand can jump across a single representable price.
When bisection runs out of price resolution before meeting the budget,
the leftover is parked on the app with the flattest response, which is
exactly where the optimum puts it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import ContractError, DomainError, SolverError
from .price_response import BisectionSettings, OffsetMode, app_rate_at_price
from .protocol import CaseFlag
from .utility import NEG_INF, UserProfile

# Tighter than the app-level default so that summed per-app wobble stays
# far below the budget tolerance even for many applications.
_SPLIT_SETTINGS = BisectionSettings(abs_tol=1e-10, max_iters=200)

_PRICE_EPS = 1e-12
_MAX_PRICE_DOUBLINGS = 200


@dataclass(frozen=True)
class InternalAllocation:
    """Per-app rates handed out by the second stage.

    rates are final allocations (targets included under abundant
    capacity); internal_price is the dual value the split settled on;
    slack is the unspent part of the budget, nonzero only when even a
    vanishing price cannot consume it.
    """

    rates: tuple[float, ...]
    internal_price: float
    slack: float


def _per_app_rates(
    user: UserProfile, price: float, first_case: bool, settings: BisectionSettings
) -> list[float]:
    rates = []
    for app in user.apps:
        if first_case:
            rates.append(
                app_rate_at_price(
                    app,
                    price,
                    cap=app.target_rate,
                    offset_mode=OffsetMode.WITHOUT_OFFSETS,
                    settings=settings,
                )
            )
        else:
            rates.append(
                app.offset
                + app_rate_at_price(
                    app, price, offset_mode=OffsetMode.WITH_OFFSETS, settings=settings
                )
            )
    return rates


def allocate_internal(
    user: UserProfile,
    r_opt: float,
    case: CaseFlag,
    settings: BisectionSettings | None = None,
) -> InternalAllocation:
    """Split r_opt among the user's applications by internal-price bisection.

    Under abundant capacity r_opt must cover the user's total target
    (the bidding stage guarantees it). Under scarce capacity any budget
    beyond the target caps flows to the uncapped applications; if every
    application is capped, the leftover stays as slack.
    """
    if settings is None:
        settings = _SPLIT_SETTINGS
    if not (math.isfinite(r_opt) and r_opt >= 0.0):
        raise DomainError(f"r_opt must be finite and nonnegative, got {r_opt!r}")
    first_case = case is CaseFlag.TARGETS_EXCEED_CAPACITY
    total_target = user.total_target
    budget = r_opt
    feas_tol = 1e-6 * max(r_opt, 1.0)

    if not first_case and r_opt < total_target - feas_tol:
        raise ContractError(
            f"user {user.user_id!r}: r_opt {r_opt} does not cover total target "
            f"{total_target} under abundant capacity"
        )

    offsets = [0.0 if first_case else app.offset for app in user.apps]

    if all(app.weight == 0.0 for app in user.apps):
        # Unreachable for valid scenarios (weights sum to 1); handled so a
        # hand-built profile degrades predictably instead of looping.
        warnings.warn(
            f"user {user.user_id!r} has all-zero application weights; "
            "allocating target offsets only",
            RuntimeWarning,
            stacklevel=2,
        )
        rates = tuple(offsets)
        return InternalAllocation(rates, math.inf, budget - sum(rates))

    if budget == 0.0:
        return InternalAllocation(tuple(0.0 for _ in user.apps), math.inf, 0.0)

    if not first_case and budget <= total_target + feas_tol:
        # Nothing meaningful above the targets; grant exactly those.
        rates = tuple(offsets)
        return InternalAllocation(rates, math.inf, budget - sum(rates))

    tol_sum = 1e-9 * max(budget, 1.0)

    lo = _PRICE_EPS
    rates_lo = _per_app_rates(user, lo, first_case, settings)
    if sum(rates_lo) <= budget + tol_sum:
        # Even a vanishing price under-consumes; positive slack is legal.
        return InternalAllocation(tuple(rates_lo), lo, budget - sum(rates_lo))

    hi = 1.0
    doublings = 0
    while sum(_per_app_rates(user, hi, first_case, settings)) > budget:
        lo = hi
        hi *= 2.0
        doublings += 1
        if doublings > _MAX_PRICE_DOUBLINGS:
            raise SolverError(
                f"no internal price below {hi} meets the budget {budget}",
                bracket=(lo, hi),
            )

    for _ in range(settings.max_iters):
        mid = 0.5 * (lo + hi)
        if not (lo < mid < hi):
            break  # bracket collapsed to adjacent floats
        rates_mid = _per_app_rates(user, mid, first_case, settings)
        total_mid = sum(rates_mid)
        if abs(total_mid - budget) <= tol_sum:
            return InternalAllocation(tuple(rates_mid), mid, budget - total_mid)
        if total_mid > budget:
            lo = mid
        else:
            hi = mid

    # Price resolution exhausted before the sum tolerance: some app sits
    # on the flat part of its marginal-value curve and its demand jumps
    # across one representable price. Take the feasible side and park
    # the leftover on the flattest responders, capped where caps apply.
    rates_hi = _per_app_rates(user, hi, first_case, settings)
    rates_lo = _per_app_rates(user, lo, first_case, settings)
    final = list(rates_hi)
    residual = budget - sum(final)
    order = sorted(
        range(len(final)), key=lambda j: rates_lo[j] - rates_hi[j], reverse=True
    )
    for j in order:
        if residual <= 0.0:
            break
        if first_case and user.apps[j].target_rate is not None:
            room = user.apps[j].target_rate - final[j]
        else:
            room = residual
        give = min(residual, room)
        if give > 0.0:
            final[j] += give
            residual -= give
    return InternalAllocation(tuple(final), 0.5 * (lo + hi), budget - sum(final))


def split_value(user: UserProfile, rates, case: CaseFlag) -> float:
    """Weighted log-utility of a candidate split (comparison objective).

    rates are the amounts above the target offsets; under abundant
    capacity each application is evaluated at rate + target. Returns the
    -inf sentinel when any positively weighted factor is zero.
    """
    if len(rates) != len(user.apps):
        raise ContractError(
            f"user {user.user_id!r} has {len(user.apps)} applications "
            f"but {len(rates)} rates were given"
        )
    first_case = case is CaseFlag.TARGETS_EXCEED_CAPACITY
    total = 0.0
    for app, rate in zip(user.apps, rates):
        if rate < 0.0:
            raise ContractError(f"infeasible split: negative rate {rate!r}")
        if first_case and app.target_rate is not None and rate > app.target_rate + 1e-9:
            raise ContractError(
                f"infeasible split: rate {rate!r} above target cap {app.target_rate!r} "
                "under scarce capacity"
            )
        if app.weight == 0.0:
            continue
        log_value = app.utility.log_evaluate(rate if first_case else rate + app.offset)
        if log_value == NEG_INF:
            return NEG_INF
        total += app.weight * log_value
    return total
