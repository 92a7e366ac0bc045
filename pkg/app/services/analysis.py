"""Closed-form schedules, recursions and round-complexity bounds.

All logarithms written as "log n" in the schedule constants are natural
logarithms. Functions here are pure and safe to call concurrently.
"""

import inspect
import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

from scipy.stats import binom

from app.core.constants import (
    BINOM_TAIL_MAX_TRIALS,
    MEAN_CONTRACTION_BASE,
    MEAN_PHASE2_FACTOR,
    MEAN_PHASE2_FLOOR,
    MEDIAN_DELTA_FACTOR,
    MEDIAN_DRIFT_BASE,
    MEDIAN_PHASE2_FACTOR,
    MEDIAN_SQUARING_BASE,
    QUANTILE_MAX_ITERATIONS,
    Direction,
)
from app.services.exceptions import InvalidInputError, ScheduleInfeasibleError

logger = logging.getLogger(__name__)


def _override(overrides, name: str):
    if overrides is None:
        return None
    return getattr(overrides, name, None)


def _is_off_spec(overrides) -> bool:
    return overrides is not None and not overrides.is_empty()


def binom_tail(n: int, k: int, p: float) -> float:
    """P[Binomial(n, p) > k] from the survival function."""
    if not 0 <= n <= BINOM_TAIL_MAX_TRIALS:
        raise InvalidInputError(f"trials must lie in [0, {BINOM_TAIL_MAX_TRIALS}]", {"n": n})
    if not 0 <= k <= n:
        raise InvalidInputError("threshold must lie in [0, n]", {"n": n, "k": k})
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError("success probability must lie in [0, 1]", {"p": p})
    if k == n:
        return 0.0
    return float(binom.sf(k, n, p))


def median_of_three_tail(x: float) -> float:
    """Probability that the median of three draws is bad when each draw is bad w.p. x."""
    return 3 * x ** 2 - 2 * x ** 3


def l_sequence(epsilon: float, beta: float, steps: int) -> List[float]:
    """Expected low-set fractions l_0..l_steps of the 3-tournament."""
    if not 0.0 < epsilon < 1.0:
        raise InvalidInputError("epsilon must lie in (0, 1)", {"epsilon": epsilon})
    if beta < 0.0:
        raise InvalidInputError("beta must be non-negative", {"beta": beta})
    if steps < 0:
        raise InvalidInputError("steps must be non-negative", {"steps": steps})

    level = 0.5 - epsilon
    sequence = [level]
    for step in range(steps):
        x = level + beta
        if not 0.0 <= x <= 1.0:
            raise InvalidInputError(
                message="recursion argument left [0, 1]",
                details={"step": step, "argument": x},
            )
        level = median_of_three_tail(x)
        sequence.append(level)
    return sequence


@dataclass(frozen=True)
class MedianSchedule:
    n: int
    epsilon: float
    beta: float
    gamma: float
    delta: float
    gamma_prime: float
    t: int
    t_drift: int
    t_squaring: int
    k: Optional[int] = None
    off_spec: bool = False

    @property
    def has_phase2(self) -> bool:
        return self.k is not None

    @property
    def engine_rounds(self) -> int:
        return self.t + (self.k or 0)

    @property
    def gossip_rounds(self) -> int:
        return 3 * self.t + (self.k or 0)

    def to_dict(self):
        data = asdict(self)
        data["engine_rounds"] = self.engine_rounds
        data["gossip_rounds"] = self.gossip_rounds
        return data


def median_schedule(n: int, epsilon: float, beta: float, gamma: float,
                    overrides=None) -> MedianSchedule:
    if n < 2:
        raise InvalidInputError("n must be at least 2", {"n": n})
    if not 0.0 < gamma < 1.0:
        raise InvalidInputError("gamma must lie in (0, 1)", {"gamma": gamma})
    gap = epsilon - beta
    if gap <= 0:
        raise ScheduleInfeasibleError(
            message="epsilon - beta must be positive",
            details={"epsilon": epsilon, "beta": beta},
        )

    delta = _override(overrides, "delta")
    if delta is None:
        delta = (MEDIAN_DELTA_FACTOR * math.log(n) / n) ** (1 / 3)
    gamma_prime = _override(overrides, "gamma_prime")
    if gamma_prime is None:
        gamma_prime = max(delta, beta, min(gamma / 4, epsilon / 14))

    t_drift = max(0, math.ceil(math.log(1 / (3 * gap)) / math.log(MEDIAN_DRIFT_BASE)))
    squaring = math.log(1 / gamma_prime) / math.log(MEDIAN_SQUARING_BASE)
    t_squaring = max(0, math.ceil(math.log2(squaring))) if squaring > 1 else 0
    t = t_drift + t_squaring + 2

    k = _override(overrides, "k")
    if k is None and gamma_prime > gamma / 4:
        base = 20 * gamma_prime
        if base >= 1:
            raise ScheduleInfeasibleError(
                message="Phase-2 sample count undefined: 20*gamma' >= 1",
                details={"n": n, "gamma_prime": gamma_prime, "gamma": gamma},
            )
        k = max(1, math.ceil(MEDIAN_PHASE2_FACTOR * math.log(gamma / 4) / math.log(base)))

    return MedianSchedule(
        n=n, epsilon=epsilon, beta=beta, gamma=gamma,
        delta=delta, gamma_prime=gamma_prime,
        t=t, t_drift=t_drift, t_squaring=t_squaring, k=k,
        off_spec=_is_off_spec(overrides),
    )


@dataclass(frozen=True)
class QuantileSchedule:
    phi: float
    epsilon: float
    beta: float
    threshold: float
    hprime_seq: Tuple[float, ...]
    h_seq: Tuple[float, ...]
    delta_seq: Tuple[float, ...]
    t: int
    direction: Optional[Direction]

    @property
    def engine_rounds(self) -> int:
        return self.t

    @property
    def gossip_rounds(self) -> int:
        return 2 * self.t

    def to_dict(self):
        data = asdict(self)
        data["direction"] = self.direction.value if self.direction else None
        data["hprime_seq"] = list(self.hprime_seq)
        data["h_seq"] = list(self.h_seq)
        data["delta_seq"] = list(self.delta_seq)
        return data


def quantile_schedule(phi: float, epsilon: float, beta: float) -> QuantileSchedule:
    """Iterates h'_{i+1} = (h'_i - β)² until h'_i ≤ T, with h_{i+1} = (h_i + β)² alongside.

    For φ > 1/2 the construction is mirrored: nodes keep the maximum and the
    tracked upper tail starts at φ - ε.
    """
    if not 0.0 < phi < 1.0:
        raise InvalidInputError("phi must lie in (0, 1)", {"phi": phi})
    if not 0.0 < epsilon < 1.0:
        raise InvalidInputError("epsilon must lie in (0, 1)", {"epsilon": epsilon})
    if beta < 0.0:
        raise InvalidInputError("beta must be non-negative", {"beta": beta})

    threshold = 0.5 - 21 * epsilon / 16
    if phi == 0.5:
        return QuantileSchedule(phi, epsilon, beta, threshold, (), (), (), 0, None)

    if phi < 0.5:
        direction = Direction.MIN
        start = 1 - (phi + epsilon)
    else:
        direction = Direction.MAX
        start = phi - epsilon

    hprime = [start]
    h = [start]
    deltas = []
    while hprime[-1] > threshold:
        if len(deltas) >= QUANTILE_MAX_ITERATIONS:
            raise ScheduleInfeasibleError(
                message="quantile recursion does not reach its threshold",
                details={"phi": phi, "epsilon": epsilon, "beta": beta},
            )
        current = hprime[-1]
        following = (current - beta) ** 2
        if current - following <= 0:
            raise ScheduleInfeasibleError(
                message="quantile recursion stalls above its threshold",
                details={"h_prime": current, "beta": beta},
            )
        deltas.append(min(1.0, (current - threshold) / (current - following)))
        hprime.append(following)
        h.append((h[-1] + beta) ** 2)

    return QuantileSchedule(
        phi=phi, epsilon=epsilon, beta=beta, threshold=threshold,
        hprime_seq=tuple(hprime), h_seq=tuple(h), delta_seq=tuple(deltas),
        t=len(deltas), direction=direction,
    )


@dataclass(frozen=True)
class MeanSchedule:
    n: int
    epsilon: float
    beta: float
    gamma: float
    delta: float
    eta: float
    eta_floor: float
    t_rounds: int
    k: Optional[int] = None
    eta_within_bound: bool = True
    off_spec: bool = False

    @property
    def has_phase2(self) -> bool:
        return self.k is not None

    @property
    def engine_rounds(self) -> int:
        return self.t_rounds + (self.k or 0)

    @property
    def gossip_rounds(self) -> int:
        return 2 * self.t_rounds + (self.k or 0)

    def to_dict(self):
        data = asdict(self)
        data["engine_rounds"] = self.engine_rounds
        data["gossip_rounds"] = self.gossip_rounds
        return data


def mean_schedule(n: int, epsilon: float, beta: float, gamma: float,
                  overrides=None) -> MeanSchedule:
    if n < 2:
        raise InvalidInputError("n must be at least 2", {"n": n})
    if not 0.0 < epsilon < 1.0 or not 0.0 < gamma < 1.0:
        raise InvalidInputError("epsilon and gamma must lie in (0, 1)",
                                {"epsilon": epsilon, "gamma": gamma})

    bound = (epsilon / 100) ** 2.5
    delta = _override(overrides, "delta")
    if delta is None:
        delta = math.sqrt(math.log(n) / n)
    eta_floor = min(gamma ** 5, bound)
    eta = _override(overrides, "eta")
    if eta is None:
        eta = max(beta, delta, eta_floor)
    if not 0.0 < eta < 1.0:
        raise ScheduleInfeasibleError("eta must lie in (0, 1)", {"eta": eta})

    t_rounds = math.ceil(math.log(1 / eta) / math.log(MEAN_CONTRACTION_BASE))

    k = _override(overrides, "k")
    if k is None and eta > eta_floor:
        if beta == 0:
            k = MEAN_PHASE2_FLOOR
        else:
            base = 32 * beta
            if base >= 1:
                raise ScheduleInfeasibleError(
                    message="Phase-2 sample count undefined: 32*beta >= 1",
                    details={"beta": beta},
                )
            k = max(MEAN_PHASE2_FLOOR,
                    math.ceil(MEAN_PHASE2_FACTOR * math.log(gamma / 2) / math.log(base)))

    return MeanSchedule(
        n=n, epsilon=epsilon, beta=beta, gamma=gamma,
        delta=delta, eta=eta, eta_floor=eta_floor, t_rounds=t_rounds, k=k,
        eta_within_bound=eta <= bound * (1 + 1e-12),
        off_spec=_is_off_spec(overrides),
    )


def composed_median_epsilon(phi: float, epsilon: float) -> float:
    """Approximation parameter of the median stage in the quantile pipeline."""
    return epsilon if phi == 0.5 else epsilon / 8


def mean_outlier_fraction(eta: float) -> float:
    """Fraction of nodes allowed to sit more than εM from the mean after Phase 1."""
    return eta ** 0.2 / 2


def lower_bound_direct(beta: float, gamma: float) -> float:
    """Rounds below which more than a γ fraction has only heard corrupted messages."""
    if not 0.0 < beta < 1.0:
        raise InvalidInputError(
            message="beta must lie in (0, 1); with beta = 0 no node is isolated",
            details={"beta": beta},
        )
    if not 0.0 < gamma < 1.0:
        raise InvalidInputError("gamma must lie in (0, 1)", {"gamma": gamma})
    return math.log(1 / (2 * gamma)) / math.log(1 / beta)


def lower_bound_spread(epsilon: float, gamma: float) -> float:
    if not 0.0 < epsilon <= 1 / 6:
        raise InvalidInputError("epsilon must lie in (0, 1/6]", {"epsilon": epsilon})
    if not 0.0 < gamma < 0.5:
        raise InvalidInputError("gamma must lie in (0, 1/2)", {"gamma": gamma})
    spread = math.log2(math.log(1 / gamma) / math.log(4 * math.e))
    return spread + math.log(1 / (6 * epsilon), 4)


def spread_sequence(steps: int) -> List[float]:
    """Uninformed-fraction recursion z_0 = 1/2, z_{i+1} = z_i² / (2e)."""
    if steps < 0:
        raise InvalidInputError("steps must be non-negative", {"steps": steps})
    sequence = [0.5]
    for _ in range(steps):
        sequence.append(sequence[-1] ** 2 / (2 * math.e))
    return sequence


PREDICT_OPERATIONS: Dict[str, Callable[..., Any]] = {
    "binom_tail": binom_tail,
    "l_sequence": l_sequence,
    "median_schedule": median_schedule,
    "quantile_schedule": quantile_schedule,
    "mean_schedule": mean_schedule,
    "lower_bound_direct": lower_bound_direct,
    "lower_bound_spread": lower_bound_spread,
    "spread_sequence": spread_sequence,
}


def predict(op: str, args: Dict[str, Any]) -> Any:
    """Evaluate one analysis operation by name and return a JSON-ready result."""
    func = PREDICT_OPERATIONS.get(op)
    if func is None:
        raise InvalidInputError(
            message=f"Unknown operation: {op}",
            details={"received": op, "valid_operations": sorted(PREDICT_OPERATIONS)},
        )
    if "overrides" in args:
        raise InvalidInputError("overrides are not accepted by predict", {"op": op})
    try:
        result = func(**args)
    except TypeError as e:
        raise InvalidInputError(f"Bad arguments for {op}: {e}", {"op": op}) from e
    if hasattr(result, "to_dict"):
        return result.to_dict()
    return result


def run_query(query: Dict[str, Any]) -> Dict[str, Any]:
    """One predict query -> {"op", "args", "result"} or {"op", "args", "error"}."""
    op = query.get("op")
    args = query.get("args") or {}
    try:
        return {"op": op, "args": args, "result": predict(op, args)}
    except (InvalidInputError, ScheduleInfeasibleError) as e:
        logger.warning(f"predict {op} failed: {e.message}")
        return {"op": op, "args": args, "error": e.to_dict()}


def operation_signatures() -> Dict[str, List[str]]:
    return {
        name: [p for p in inspect.signature(func).parameters if p != "overrides"]
        for name, func in PREDICT_OPERATIONS.items()
    }
