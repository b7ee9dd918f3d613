"""Closed-form performance models for the relay spreading protocols.

Every quantity the event-driven simulator measures has a counterpart here:
duplicate-reception law, per-state collection law, relay-initialization time,
source-to-destination collection delay, and network spreading time. Exact
harmonic sums are used wherever the asymptotic literature form would hide
O(1) terms at desk-scale network sizes; the asymptotic values are reported
alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from enum import Enum
from typing import NamedTuple

from .errors import ConfigurationError

__all__ = [
    "Regime",
    "TheoryPrediction",
    "decode_threshold",
    "harmonic",
    "naive_nonredundant_probability",
    "duplicate_count_pmf",
    "collection_success_probability",
    "packets_per_state_pmf",
    "packets_per_state_mean",
    "init_collection_mean",
    "decode_state",
    "decode_state_estimate",
    "expected_init_time",
    "expected_collection_delay",
    "gaussian_max_estimate",
    "residual_time_moments",
    "expected_spreading_time",
    "predict",
]


class Regime(str, Enum):
    """Whether decoding completes during relay initialization or after it."""

    SMALL_L = "small_l"
    LARGE_L = "large_l"


def _check_n(n: int) -> None:
    if n < 2:
        raise ConfigurationError(f"need at least 2 nodes, got n={n}")


def _check_lambda(lam: float) -> None:
    if not (lam > 0) or math.isinf(lam):
        raise ConfigurationError(f"meeting rate must be positive and finite, got {lam}")


def harmonic(n: int) -> float:
    """n-th harmonic number, summed small-to-large for accuracy."""
    if n < 0:
        raise ConfigurationError(f"harmonic number needs n >= 0, got {n}")
    return math.fsum(1.0 / k for k in range(n, 0, -1))


def decode_threshold(l: int, epsilon: float) -> int:
    """Number of distinct packets required to decode l source packets.

    ceil((1 + epsilon) * l), guarded against float noise pushing an exact
    integer product over the next ceiling.
    """
    if l < 1:
        raise ConfigurationError(f"source packet count must be >= 1, got {l}")
    if epsilon < 0:
        raise ConfigurationError(f"overhead must be >= 0, got {epsilon}")
    return max(l, math.ceil((1.0 + epsilon) * l - 1e-9))


def naive_nonredundant_probability(n: int) -> float:
    """Steady-state probability that a relay-to-relay reception is new
    under the naive random-forwarding protocol: (sqrt(n) - 1) / (n - 1).
    """
    _check_n(n)
    return (math.sqrt(n) - 1.0) / (n - 1.0)


def duplicate_count_pmf(k: int) -> float:
    """P(a relay-delivered packet is received exactly k times | >= once) = 2^-k.

    The relay forwards its newest packet on every meeting, so repeats of one
    packet are the meetings squeezed between two consecutive refreshes from
    the source; racing the two unit-rate exponential clocks gives the
    half-per-extra-copy law. Independent of the meeting rate.
    """
    if k < 1:
        raise ConfigurationError(f"reception count must be >= 1, got {k}")
    return 2.0 ** (-k)


def collection_success_probability(n: int, k: int) -> float:
    """Success parameter of the per-state collection law: (2n-2k)/(2n-k)."""
    _check_n(n)
    if not 1 <= k <= n - 1:
        raise ConfigurationError(f"state index must be in [1, {n - 1}], got {k}")
    return (2.0 * n - 2.0 * k) / (2.0 * n - k)


def packets_per_state_pmf(n: int, k: int, i: int) -> float:
    """P(a node collects exactly i new packets while k nodes disseminate).

    Geometric: the exponential sojourn of the initialization state mixed with
    Poisson collection at rate k*lam/2 integrates to (1-p)^i * p with
    p = (2n-2k)/(2n-k). The meeting rate cancels.
    """
    if i < 0:
        raise ConfigurationError(f"packet count must be >= 0, got {i}")
    p = collection_success_probability(n, k)
    return (1.0 - p) ** i * p


def packets_per_state_mean(n: int, k: int) -> float:
    """Mean packets collected per node while k nodes disseminate: k/(2(n-k))."""
    p = collection_success_probability(n, k)
    return (1.0 - p) / p


class InitCollection(NamedTuple):
    exact: float
    asymptotic: float


def init_collection_mean(n: int) -> InitCollection:
    """Expected distinct packets a node holds when initialization ends.

    exact: sum over states of k/(2(n-k)) = (n/2) H_{n-1} - (n-1)/2
    asymptotic: (n ln n)/2
    """
    _check_n(n)
    exact = math.fsum(k / (2.0 * (n - k)) for k in range(1, n))
    return InitCollection(exact=exact, asymptotic=0.5 * n * math.log(n))


def decode_state(n: int, l: float) -> int:
    """Smallest state index at which the mean collected packets reach l.

    Cumulative summation of k/(2(n-k)); returns n when even the full
    initialization phase does not reach l (large-message regime).
    """
    _check_n(n)
    if l <= 0:
        raise ConfigurationError(f"packet target must be positive, got {l}")
    total = 0.0
    for k in range(1, n):
        total += k / (2.0 * (n - k))
        if total >= l:
            return k
    return n


def decode_state_estimate(n: int, l: float) -> float:
    """Closed-form stand-in for decode_state, 2*sqrt(n*l).

    Valid when the decode state lands well before the end of initialization;
    the caller is responsible for the regime check.
    """
    _check_n(n)
    if l <= 0:
        raise ConfigurationError(f"packet target must be positive, got {l}")
    return 2.0 * math.sqrt(n * l)


class InitTime(NamedTuple):
    exact: float
    asymptotic: float


def expected_init_time(n: int, lam: float) -> InitTime:
    """Expected time for the source to have met every other node.

    Coupon-collector over exponential sojourns: exact H_{n-1}/lam, with the
    ln(n)/lam asymptotic alongside.
    """
    _check_n(n)
    _check_lambda(lam)
    return InitTime(exact=harmonic(n - 1) / lam, asymptotic=math.log(n) / lam)


@dataclass(frozen=True)
class DelayPrediction:
    """Expected source-to-destination collection delay plus its regime."""

    value: float
    regime: Regime
    closed_form: float | None  # (2l + 2*sqrt(nl))/(n*lam) when l < n


def expected_collection_delay(
    n: int, lam: float, l: int, epsilon: float = 0.0
) -> DelayPrediction:
    """Mean time for one node to collect enough distinct packets to decode.

    Small-message regime (decode state < n): (2l + k)/(n*lam) with the exact
    integer decode state k. Large-message regime: exact initialization time
    plus the residual Erlang mean 2*(l' - L0 - 1)/(n*lam), clamped at zero,
    where L0 is the exact initialization collection mean.
    """
    _check_n(n)
    _check_lambda(lam)
    lp = decode_threshold(l, epsilon)
    k = decode_state(n, l)
    closed = (2.0 * l + 2.0 * math.sqrt(n * l)) / (n * lam) if l < n else None
    if k < n:
        return DelayPrediction(
            value=(2.0 * l + k) / (n * lam), regime=Regime.SMALL_L, closed_form=closed
        )
    l0 = init_collection_mean(n).exact
    residual = max(0.0, lp - l0 - 1.0)
    value = expected_init_time(n, lam).exact + 2.0 * residual / (n * lam)
    return DelayPrediction(value=value, regime=Regime.LARGE_L, closed_form=closed)


def gaussian_max_estimate(n: int) -> float:
    """First-order estimate sqrt(2 ln n) of the max of n standard normals."""
    _check_n(n)
    return math.sqrt(2.0 * math.log(n))


class ResidualMoments(NamedTuple):
    mean: float
    variance: float
    degenerate: bool  # threshold at or below the initialization mean + 1


def residual_time_moments(
    threshold: float, init_mean: float, n: int, lam: float
) -> ResidualMoments:
    """Mean and variance of the post-initialization collection time.

    The extra packets beyond the initialization phase arrive at rate n*lam/2,
    so the residual time is Erlang with shape threshold - init_mean - 1:
    mean 2*shape/(n*lam), variance 4*shape/(n*lam)^2. A non-positive shape
    degenerates to (0, 0).
    """
    _check_n(n)
    _check_lambda(lam)
    shape = threshold - init_mean - 1.0
    if shape <= 0:
        return ResidualMoments(0.0, 0.0, True)
    scale = n * lam
    return ResidualMoments(2.0 * shape / scale, 4.0 * shape / scale**2, False)


@dataclass(frozen=True)
class SpreadingPrediction:
    """Bounds or point estimate for the whole-network spreading time."""

    lower: float
    upper: float | None  # exact init time; only valid in the small-l regime
    point: float | None  # only in the large-l regime (threshold > init mean)
    simplified: float | None  # (2l + 2*sqrt(2(l-L0) ln n))/(n*lam)
    regime: Regime


def expected_spreading_time(
    n: int, lam: float, l: int, epsilon: float = 0.0
) -> SpreadingPrediction:
    """Expected time until every node can decode.

    Small-message regime: bracketed by the per-node collection delay below
    and the exact initialization time above. Large-message regime (decode
    threshold above the initialization collection mean): initialization time
    plus the expected maximum of the per-node residual times, estimated by
    the Gaussian-extremes correction
        (2s + 2*sqrt(2 s ln(n-1))) / (n*lam),   s = l' - L0 - 1,
    with the coarser 2l + 2*sqrt(2(l-L0) ln n) form reported alongside.
    """
    _check_n(n)
    _check_lambda(lam)
    lp = decode_threshold(l, epsilon)
    l0 = init_collection_mean(n).exact
    delay = expected_collection_delay(n, lam, l, epsilon)
    init = expected_init_time(n, lam).exact
    if lp <= l0:
        return SpreadingPrediction(
            lower=delay.value,
            upper=init,
            point=None,
            simplified=None,
            regime=Regime.SMALL_L,
        )
    shape = max(0.0, lp - l0 - 1.0)
    point = init + (
        2.0 * shape + 2.0 * math.sqrt(2.0 * shape * math.log(n - 1))
    ) / (n * lam)
    simplified = None
    if l > l0:
        simplified = (
            2.0 * l + 2.0 * math.sqrt(2.0 * (l - l0) * math.log(n))
        ) / (n * lam)
    return SpreadingPrediction(
        lower=delay.value,
        upper=None,
        point=point,
        simplified=simplified,
        regime=Regime.LARGE_L,
    )


@dataclass(frozen=True)
class TheoryPrediction:
    """All closed-form predictions evaluated for one configuration."""

    n: int
    lam: float
    l: int
    epsilon: float
    decode_threshold: int
    init_collection_mean: float
    init_collection_asymptotic: float
    decode_state: int
    decode_state_estimate: float
    init_time: float
    init_time_asymptotic: float
    expected_delay: float
    delay_closed_form: float | None
    spreading_lower: float
    spreading_upper: float | None
    spreading_point: float | None
    spreading_simplified: float | None
    regime: str
    naive_nonredundant: float
    duplication_mean: float  # expected redundant copies per delivered packet

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


def predict(n: int, lam: float, l: int, epsilon: float = 0.0) -> TheoryPrediction:
    """Evaluate every closed form for one configuration."""
    _check_n(n)
    _check_lambda(lam)
    l0 = init_collection_mean(n)
    delay = expected_collection_delay(n, lam, l, epsilon)
    spread = expected_spreading_time(n, lam, l, epsilon)
    init = expected_init_time(n, lam)
    return TheoryPrediction(
        n=n,
        lam=lam,
        l=l,
        epsilon=epsilon,
        decode_threshold=decode_threshold(l, epsilon),
        init_collection_mean=l0.exact,
        init_collection_asymptotic=l0.asymptotic,
        decode_state=decode_state(n, l),
        decode_state_estimate=decode_state_estimate(n, l),
        init_time=init.exact,
        init_time_asymptotic=init.asymptotic,
        expected_delay=delay.value,
        delay_closed_form=delay.closed_form,
        spreading_lower=spread.lower,
        spreading_upper=spread.upper,
        spreading_point=spread.point,
        spreading_simplified=spread.simplified,
        regime=delay.regime.value,
        naive_nonredundant=naive_nonredundant_probability(n),
        duplication_mean=1.0,
    )
