"""Normalized application utility curves and their log-domain calculus.

Two shapes cover the traffic mix considered here: a sigmoidal curve for
real-time applications (steep around an inflection rate b) and a
logarithmic curve for delay-tolerant ones (diminishing returns set by k).
Both are normalized so the value at rate 0 is exactly 0 and the curve
tops out at 1, which makes weighted products across applications
meaningful.

Every solver in this package works on ln U and its rate derivative, so
the numerically delicate pieces are concentrated in this module. All
branches exponentiate only non-positive (or safely bounded) arguments;
steepness-times-inflection products up to about 700 are handled without
overflow, and saturation degrades gracefully rather than raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

from .errors import ContractError, DomainError

NEG_INF = float("-inf")


def _require_positive_finite(value: float, name: str) -> None:
    if not (math.isfinite(value) and value > 0.0):
        raise DomainError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class SigmoidalUtility:
    """Normalized sigmoid U(r) = c_norm * (1 / (1 + e^{-a(r-b)}) - d_norm).

    The normalization constants are chosen so U(0) = 0 and U(r) -> 1 as
    r grows; the inflection sits at r = b and a controls the steepness.
    """

    a: float
    b: float

    def __post_init__(self) -> None:
        _require_positive_finite(self.a, "a")
        _require_positive_finite(self.b, "b")

    @property
    def c_norm(self) -> float:
        return 1.0 + math.exp(-self.a * self.b)

    @property
    def d_norm(self) -> float:
        e = math.exp(-self.a * self.b)
        return e / (1.0 + e)

    @property
    def rate_scale(self) -> float:
        """Characteristic rate of the curve (the inflection point)."""
        return self.b

    def evaluate(self, rate: float) -> float:
        """Utility at the given rate, exactly 0 at rate 0, < 1 for finite rate.

        Algebraically U(r) = (1 - e^{-ar}) / (1 + e^{-a(r-b)}); the two
        branches below are that expression rearranged so that no
        exponential ever sees a positive argument beyond 700.
        """
        if rate < 0.0:
            raise DomainError(f"rate must be nonnegative, got {rate!r}")
        ab = self.a * self.b
        x = self.a * (rate - self.b)
        if x <= 0.0:
            ar = self.a * rate
            # e^x - e^{-ab} == e^{-ab} * expm1(ar); the expm1 form keeps
            # relative accuracy near rate 0, the direct form takes over
            # when ar alone would overflow expm1 (needs ab > 700 too).
            if ar <= 700.0:
                num = math.exp(-ab) * math.expm1(ar)
            else:
                num = math.exp(x) - math.exp(-ab)
            return num / (1.0 + math.exp(x))
        return -math.expm1(-self.a * rate) / (1.0 + math.exp(-x))

    def log_evaluate(self, rate: float) -> float:
        """ln of evaluate, with -inf returned at rate 0 instead of raising."""
        if rate < 0.0:
            raise DomainError(f"rate must be nonnegative, got {rate!r}")
        if rate == 0.0:
            return NEG_INF
        ab = self.a * self.b
        ar = self.a * rate
        x = self.a * (rate - self.b)
        if x <= 0.0:
            if ar <= 700.0:
                num = math.expm1(ar)
                if num <= 0.0:  # a*rate underflowed to zero
                    return NEG_INF
                return -ab + math.log(num) - math.log1p(math.exp(x))
            return x + math.log1p(-math.exp(-ar)) - math.log1p(math.exp(x))
        return math.log1p(-math.exp(-ar)) - math.log1p(math.exp(-x))

    def dlog_evaluate(self, rate: float) -> float:
        """d/dr ln U(r); strictly positive and strictly decreasing.

        Closed form a(1 + e^{-ab}) / (e^{a(r-b)} + 1 - e^{-ab} - e^{-ar});
        near rate 0 this behaves like 1/r, in deep saturation like
        a * e^{-a(r-b)}.
        """
        if rate <= 0.0:
            raise DomainError(f"rate must be positive, got {rate!r}")
        ab = self.a * self.b
        x = self.a * (rate - self.b)
        scale = self.a * (1.0 + math.exp(-ab))
        if x > 700.0:
            return scale * math.exp(-x)
        denom = math.exp(x) + 1.0 - math.exp(-ab) - math.exp(-self.a * rate)
        if denom <= 0.0:
            # Rounding collapse, only reachable at denormal rates where
            # the true value exceeds float range anyway.
            return math.inf
        return scale / denom


@dataclass(frozen=True)
class LogarithmicUtility:
    """Normalized log curve U(r) = ln(1 + k r) / ln(1 + k r_max).

    Exactly 1 at r_max. The same formula extends smoothly beyond r_max
    (values above 1, still increasing and concave); solvers rely on that
    smoothness, so no clamping happens here.
    """

    k: float
    r_max: float

    def __post_init__(self) -> None:
        _require_positive_finite(self.k, "k")
        _require_positive_finite(self.r_max, "r_max")

    @property
    def rate_scale(self) -> float:
        """Characteristic rate of the curve (the 100%-utilization rate)."""
        return self.r_max

    def evaluate(self, rate: float) -> float:
        if rate < 0.0:
            raise DomainError(f"rate must be nonnegative, got {rate!r}")
        return math.log1p(self.k * rate) / math.log1p(self.k * self.r_max)

    def log_evaluate(self, rate: float) -> float:
        if rate < 0.0:
            raise DomainError(f"rate must be nonnegative, got {rate!r}")
        if rate == 0.0:
            return NEG_INF
        num = math.log1p(self.k * rate)
        if num <= 0.0:  # k*rate underflowed to zero
            return NEG_INF
        return math.log(num) - math.log(math.log1p(self.k * self.r_max))

    def dlog_evaluate(self, rate: float) -> float:
        """d/dr ln U(r) = k / ((1 + k r) ln(1 + k r))."""
        if rate <= 0.0:
            raise DomainError(f"rate must be positive, got {rate!r}")
        kr = self.k * rate
        denom = (1.0 + kr) * math.log1p(kr)
        if denom <= 0.0:
            return math.inf
        return self.k / denom


UtilityFunction = Union[SigmoidalUtility, LogarithmicUtility]


@dataclass(frozen=True)
class Application:
    """One application of a user: a utility curve, a usage weight, and an
    optional guaranteed target rate.

    The target rate doubles as the offset added to the rate argument in
    the aggregated utility: a target-bearing application is evaluated at
    (extra rate + target).
    """

    utility: UtilityFunction
    weight: float
    target_rate: float | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.utility, (SigmoidalUtility, LogarithmicUtility)):
            raise DomainError(
                f"utility must be sigmoidal or logarithmic, got {type(self.utility).__name__}"
            )
        if not (math.isfinite(self.weight) and 0.0 <= self.weight <= 1.0):
            raise DomainError(f"weight must lie in [0, 1], got {self.weight!r}")
        if self.target_rate is not None:
            _require_positive_finite(self.target_rate, "target_rate")

    @property
    def offset(self) -> float:
        """Rate offset contributed by the target (0 when no target)."""
        return 0.0 if self.target_rate is None else self.target_rate


class UserClass(Enum):
    VIP = "vip"
    REGULAR = "regular"


@dataclass(frozen=True)
class UserProfile:
    """A user: service class, subscription weight beta, and its applications."""

    user_id: str
    user_class: UserClass
    beta: float
    apps: tuple[Application, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.user_id, str) or not self.user_id:
            raise DomainError(f"user_id must be a nonempty string, got {self.user_id!r}")
        if not isinstance(self.user_class, UserClass):
            raise DomainError(f"user_class must be a UserClass, got {self.user_class!r}")
        _require_positive_finite(self.beta, "beta")
        object.__setattr__(self, "apps", tuple(self.apps))
        if not self.apps:
            raise DomainError(f"user {self.user_id!r} must have at least one application")

    @property
    def is_vip(self) -> bool:
        return self.user_class is UserClass.VIP

    @property
    def total_target(self) -> float:
        return sum(app.offset for app in self.apps)


def aggregate_user_utility(user: UserProfile, rates: Sequence[float]) -> float:
    """Weighted geometric mean of per-application utilities.

    Computed as exp(sum of weight * ln U(rate + offset)); a zero-weight
    application contributes factor 1 regardless of its rate, while a
    zero-utility factor with positive weight collapses the product to 0.
    """
    if len(rates) != len(user.apps):
        raise ContractError(
            f"user {user.user_id!r} has {len(user.apps)} applications "
            f"but {len(rates)} rates were given"
        )
    total = 0.0
    for app, rate in zip(user.apps, rates):
        if rate < 0.0:
            raise DomainError(f"rates must be nonnegative, got {rate!r}")
        if app.weight == 0.0:
            continue  # factor U^0 = 1, and 0 * (-inf) must not poison the sum
        log_value = app.utility.log_evaluate(rate + app.offset)
        if log_value == NEG_INF:
            return 0.0
        total += app.weight * log_value
    return math.exp(total)
