"""Relay protocol state machines driven by a meeting-event stream.

Two protocols share one engine:

* naive: every relay forwards a uniformly random packet from its buffer.
* rmpr: every relay forwards only the newest packet it received directly
  from the source, which confines each packet to a single
  source -> relay -> destination path.

The source (node 0 by default) issues a brand-new packet id on each of its
meetings and never receives. A node decodes once it holds `threshold`
distinct packets.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

import numpy as np

from . import analytics
from .errors import (
    ConfigurationError,
    IncompleteTrialError,
    InvariantViolation,
    SimulationError,
)

__all__ = [
    "Protocol",
    "ExchangeMode",
    "Role",
    "DecodeRule",
    "NodeState",
    "NetworkState",
    "TrialRecord",
    "decode_check",
    "on_meeting",
    "run_trial",
    "duplication_trial",
]

KAPPA_WARMUP_FRACTION = 0.2  # leading share of meetings ignored by the kappa estimate


class Protocol(str, Enum):
    NAIVE = "naive"
    RMPR = "rmpr"


class ExchangeMode(str, Enum):
    BIDIRECTIONAL = "bi"
    UNIDIRECTIONAL = "uni"


class Role(str, Enum):
    SOURCE = "source"
    RELAY_DESTINATION = "relay_destination"


@dataclass(frozen=True)
class DecodeRule:
    """Decode succeeds once a node holds threshold distinct packets."""

    l: int
    epsilon: float = 0.0

    def __post_init__(self):
        # validates l and epsilon as a side effect
        analytics.decode_threshold(self.l, self.epsilon)

    @property
    def threshold(self) -> int:
        return analytics.decode_threshold(self.l, self.epsilon)


@dataclass
class NodeState:
    """Per-node protocol state, exposed for inspection in small runs."""

    role: Role
    distinct: set = field(default_factory=set)
    newest_from_source: Optional[int] = None
    buffer: list = field(default_factory=list)
    receptions: Counter = field(default_factory=Counter)


def decode_check(node: NodeState, rule: DecodeRule) -> bool:
    """True once the node holds enough distinct packets to decode."""
    return len(node.distinct) >= rule.threshold


@dataclass
class TrialRecord:
    """Measurements of one trial.

    decode_times has one entry per non-source node in index order (None when
    the trial ended first). duplication_histogram counts (packet, receiver)
    pairs by how many relay deliveries they saw.
    """

    decode_times: list
    spreading_time: Optional[float]
    duplication_histogram: dict
    meetings_consumed: int
    nonredundant_ratio: Optional[float]
    nonredundant_ratio_overall: Optional[float]
    relay_init_time: Optional[float]
    packets_issued: int
    complete: bool

    def to_json(self) -> dict:
        return {
            "decode_times": self.decode_times,
            "spreading_time": self.spreading_time,
            "duplication_histogram": {
                str(k): v for k, v in sorted(self.duplication_histogram.items())
            },
            "nonredundant_ratio": self.nonredundant_ratio,
            "meetings_consumed": self.meetings_consumed,
        }

    def mean_decode_time(self) -> Optional[float]:
        times = [t for t in self.decode_times if t is not None]
        if len(times) != len(self.decode_times):
            return None
        return sum(times) / len(times)

    def redundant_mean(self) -> Optional[float]:
        """Mean redundant relay deliveries per delivered (packet, receiver) pair."""
        pairs = sum(self.duplication_histogram.values())
        if pairs == 0:
            return None
        extra = sum((k - 1) * c for k, c in self.duplication_histogram.items())
        return extra / pairs


class NetworkState:
    """Mutable protocol state for all n nodes plus bookkeeping counters."""

    def __init__(
        self,
        n: int,
        rule: DecodeRule,
        protocol: Protocol = Protocol.RMPR,
        exchange: ExchangeMode = ExchangeMode.BIDIRECTIONAL,
        rng: Optional[random.Random] = None,
        source: int = 0,
        track_receptions: bool = True,
        verify: bool = True,
    ):
        if n < 2:
            raise ConfigurationError(f"need at least 2 nodes, got n={n}")
        if not 0 <= source < n:
            raise ConfigurationError(f"source index {source} out of range")
        self.n = n
        self.rule = rule
        self.protocol = Protocol(protocol)
        self.exchange = ExchangeMode(exchange)
        self.source = source
        self.rng = rng
        self.track_receptions = track_receptions
        self.verify = verify
        if rng is None and (
            self.protocol is Protocol.NAIVE
            or self.exchange is ExchangeMode.UNIDIRECTIONAL
        ):
            raise ConfigurationError(
                "naive forwarding and unidirectional exchange need an rng"
            )
        self.nodes = [
            NodeState(role=Role.SOURCE if i == source else Role.RELAY_DESTINATION)
            for i in range(n)
        ]
        self.threshold = rule.threshold
        self.time = 0.0
        self.meetings = 0
        self.packets_issued = 0
        self.decode_times: list = [None] * n
        self.decoded = 0
        self.met_source = [False] * n
        self.met_source[source] = True
        self.init_count = 0
        self.relay_init_time: Optional[float] = None
        # pid -> node that received it from the source (its only legal relayer)
        self.issued_to: list = []
        # (pid, receiver) -> relay-delivered reception count
        self.relay_deliveries: dict = {}
        # per relay-relay reception: meeting index and whether it was new
        self.rr_meeting_idx: list = []
        self.rr_new: list = []
        self.source_delivery_idx: list = []

    # -- event handling ----------------------------------------------------

    def apply(self, time: float, a: int, b: int) -> None:
        """Process a single meeting (thin wrapper over consume)."""
        self.consume([(time, a, b)], stop_when_decoded=False)

    def consume(
        self,
        events: Iterable,
        stop_when_decoded: bool = True,
        horizon: Optional[float] = None,
        max_events: Optional[int] = None,
    ) -> bool:
        """Fold meetings into the network state.

        Returns True when every non-source node has decoded (and, with
        stop_when_decoded, stops right there); False when the events ran out
        or the horizon / event budget was hit first.
        """
        n = self.n
        src = self.source
        rmpr = self.protocol is Protocol.RMPR
        bidir = self.exchange is ExchangeMode.BIDIRECTIONAL
        verify = self.verify
        track = self.track_receptions
        threshold = self.threshold
        nodes = self.nodes
        decode_times = self.decode_times
        met_source = self.met_source
        issued_to = self.issued_to
        deliveries = self.relay_deliveries
        rr_idx = self.rr_meeting_idx
        rr_new = self.rr_new
        src_idx = self.source_delivery_idx
        rng = self.rng
        target = n - 1
        meetings = self.meetings
        issued = self.packets_issued
        decoded = self.decoded
        last_time = self.time
        budget = math.inf if max_events is None else max_events
        done = decoded >= target

        for t, a, b in events:
            if meetings >= budget:
                break
            if t < last_time:
                raise SimulationError(
                    f"event at t={t} precedes already-processed t={last_time}"
                )
            if horizon is not None and t > horizon:
                break
            if not (0 <= a < n and 0 <= b < n) or a == b:
                raise SimulationError(f"bad meeting pair ({a}, {b}) for n={n}")
            last_time = t
            meetings += 1

            if a == src or b == src:
                other = b if a == src else a
                pid = issued
                issued += 1
                issued_to.append(other)
                node = nodes[other]
                node.distinct.add(pid)  # fresh id: always new
                if track:
                    node.receptions[pid] += 1
                if rmpr:
                    node.newest_from_source = pid
                else:
                    node.buffer.append(pid)
                if not met_source[other]:
                    met_source[other] = True
                    self.init_count += 1
                    if self.init_count == target:
                        self.relay_init_time = t
                src_idx.append(meetings)
                if decode_times[other] is None and len(node.distinct) >= threshold:
                    decode_times[other] = t
                    decoded += 1
            else:
                if bidir:
                    senders = ((a, b), (b, a))
                else:
                    senders = ((a, b),) if rng.random() < 0.5 else ((b, a),)
                # pick payloads first so a simultaneous exchange cannot
                # forward a packet that just arrived in the same meeting
                picked = []
                for i, j in senders:
                    if rmpr:
                        picked.append(nodes[i].newest_from_source)
                    else:
                        buf = nodes[i].buffer
                        picked.append(buf[rng.randrange(len(buf))] if buf else None)
                for (i, j), pid in zip(senders, picked):
                    if pid is None:
                        continue
                    if verify and rmpr and issued_to[pid] != i:
                        raise InvariantViolation(
                            f"packet {pid} relayed by node {i}, "
                            f"but the source issued it to node {issued_to[pid]}"
                        )
                    node = nodes[j]
                    new = pid not in node.distinct
                    key = (pid, j)
                    deliveries[key] = deliveries.get(key, 0) + 1
                    if track:
                        node.receptions[pid] += 1
                    rr_idx.append(meetings)
                    rr_new.append(new)
                    if new:
                        node.distinct.add(pid)
                        if not rmpr:
                            node.buffer.append(pid)
                        if decode_times[j] is None and len(node.distinct) >= threshold:
                            decode_times[j] = t
                            decoded += 1

            if decoded >= target:
                done = True
                if stop_when_decoded:
                    break

        self.time = last_time
        self.meetings = meetings
        self.packets_issued = issued
        self.decoded = decoded
        return done

    # -- derived measurements ----------------------------------------------

    def nonredundant_ratios(
        self, warmup_fraction: float = KAPPA_WARMUP_FRACTION
    ) -> tuple[Optional[float], Optional[float]]:
        """(relay-to-relay, overall) fraction of new receptions after warm-up.

        Warm-up discards receptions from the leading `warmup_fraction` of all
        consumed meetings; the relay-restricted value is the steady-state
        duplication measurement, the overall one also counts the always-new
        source deliveries.
        """
        cutoff = warmup_fraction * self.meetings
        total = 0
        fresh = 0
        for idx, new in zip(self.rr_meeting_idx, self.rr_new):
            if idx > cutoff:
                total += 1
                fresh += new
        relay_ratio = fresh / total if total else None
        src = sum(1 for idx in self.source_delivery_idx if idx > cutoff)
        overall = (
            (fresh + src) / (total + src) if (total + src) else None
        )
        return relay_ratio, overall

    def duplication_histogram(self) -> dict:
        """Counts of (packet, receiver) pairs by relay-delivered receptions."""
        hist = Counter(self.relay_deliveries.values())
        return dict(hist)

    def check_invariants(self) -> None:
        """Run the end-of-trial consistency checks (verify mode)."""
        union = set()
        for node in self.nodes:
            union |= node.distinct
        if len(union) != self.packets_issued:
            raise InvariantViolation(
                f"{self.packets_issued} packets issued but {len(union)} distinct "
                "ids present in the network"
            )
        if union and (min(union) != 0 or max(union) != self.packets_issued - 1):
            raise InvariantViolation("packet ids are not the issued range")
        if self.track_receptions:
            for i, node in enumerate(self.nodes):
                if not node.distinct <= set(node.receptions):
                    raise InvariantViolation(
                        f"node {i} holds packets it never received"
                    )

    def record(self, complete: bool) -> TrialRecord:
        kappa, kappa_all = self.nonredundant_ratios()
        src = self.source
        decode_times = [
            self.decode_times[i] for i in range(self.n) if i != src
        ]
        spreading = None
        if complete:
            spreading = max(decode_times)
        return TrialRecord(
            decode_times=decode_times,
            spreading_time=spreading,
            duplication_histogram=self.duplication_histogram(),
            meetings_consumed=self.meetings,
            nonredundant_ratio=kappa,
            nonredundant_ratio_overall=kappa_all,
            relay_init_time=self.relay_init_time,
            packets_issued=self.packets_issued,
            complete=complete,
        )


def on_meeting(state: NetworkState, event, rng: Optional[random.Random] = None):
    """Apply one MeetingEvent to the network state and return it."""
    if rng is not None:
        state.rng = rng
    state.apply(event[0], event[1], event[2])
    return state


def run_trial(
    n: int,
    rule: DecodeRule,
    events: Iterable,
    protocol: Protocol = Protocol.RMPR,
    exchange: ExchangeMode = ExchangeMode.BIDIRECTIONAL,
    rng: Optional[random.Random] = None,
    horizon: Optional[float] = None,
    max_events: Optional[int] = None,
    track_receptions: bool = False,
    verify: bool = True,
) -> TrialRecord:
    """Fold one event stream until every non-source node decodes.

    Raises IncompleteTrialError (carrying the partial TrialRecord) when the
    stream, horizon, or event budget ends first.
    """
    state = NetworkState(
        n,
        rule,
        protocol=protocol,
        exchange=exchange,
        rng=rng,
        track_receptions=track_receptions,
        verify=verify,
    )
    done = state.consume(events, True, horizon, max_events)
    if verify:
        state.check_invariants()
    record = state.record(done)
    if not done:
        raise IncompleteTrialError(
            f"trial incomplete after {state.meetings} meetings "
            f"(t={state.time:.6g}, horizon={horizon})",
            record,
        )
    return record


def duplication_trial(lam: float, rng: np.random.Generator) -> int:
    """Redundant copies of one relay-delivered packet in the 3-node subsystem.

    The relay's refresh gap from the source is Exp(lam); destination meetings
    arrive as a rate-lam Poisson process, so the reception count in the gap is
    Poisson(lam * gap). Conditioned on at least one reception, returns
    count - 1.
    """
    if not lam > 0:
        raise ConfigurationError(f"meeting rate must be positive, got {lam}")
    while True:
        gap = rng.exponential(1.0 / lam)
        k = int(rng.poisson(lam * gap))
        if k >= 1:
            return k - 1
