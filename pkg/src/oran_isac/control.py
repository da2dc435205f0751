"""Near-RT and non-RT control layers: xApp client and A1 sensing policy.

The xApp drives the subscription handshake, stamps every indication with its
arrival time t1, and issues control commands whose acknowledgements carry the
dApp-side apply time — together these give the telemetry, control, and
closed-loop latency samples. The policy layer is a static A1 document (loaded
from JSON by the rApp stand-in) enforced at the xApp before any request
reaches the wire: periods are clamped into bounds, beams outside the
geographic scope are rejected, and a sliding one-second window accounts for
the sensing time budget.
"""

from __future__ import annotations

import json
import threading
import time
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable

from .clock import SharedClock, default_clock
from .e2sm import (
    CommandKind,
    ControlAckPayload,
    ControlRequestPayload,
    E2SensMessage,
    MsgType,
    SensingReport,
    SubscriptionMode,
    SubscriptionRequestPayload,
    SubscriptionResponsePayload,
    TriggerConfig,
    decode_message,
    encode_message,
)
from .transport import Channel, Disconnected, Timeout


class ControlError(Exception):
    pass


class PolicyViolation(ControlError):
    pass


class RequestTimeout(ControlError):
    pass


@dataclass(frozen=True)
class A1IsacPolicy:
    """High-level sensing directives pushed from the non-RT layer."""

    policy_id: str = "default"
    geographic_scope: tuple[tuple[float, float], ...] = ((-180.0, 180.0),)
    temporal_budget_ms_per_s: float = 1000.0
    sensing_priority: int = 128
    energy_limit: float = 1.0
    min_period_ms: float = 1.0
    max_period_ms: float = 1000.0

    def __post_init__(self) -> None:
        if self.min_period_ms > self.max_period_ms:
            raise ValueError("min_period_ms must not exceed max_period_ms")
        if not 0.0 <= self.temporal_budget_ms_per_s <= 1000.0:
            raise ValueError("temporal budget must be within one second per second")
        if not 0 <= self.sensing_priority <= 255:
            raise ValueError("sensing_priority out of [0, 255]")
        if not 0.0 <= self.energy_limit <= 1.0:
            raise ValueError("energy_limit out of [0, 1]")

    def azimuth_in_scope(self, azimuth_deg: float) -> bool:
        return any(lo <= azimuth_deg <= hi for lo, hi in self.geographic_scope)


def load_policy(path: str | Path) -> A1IsacPolicy:
    """Load an A1 sensing policy from its JSON document."""
    doc = json.loads(Path(path).read_text())
    return A1IsacPolicy(
        policy_id=str(doc.get("policy_id", "default")),
        geographic_scope=tuple(
            (float(lo), float(hi)) for lo, hi in doc.get("geographic_scope", [[-180, 180]])
        ),
        temporal_budget_ms_per_s=float(doc.get("temporal_budget_ms_per_s", 1000.0)),
        sensing_priority=int(doc.get("sensing_priority", 128)),
        energy_limit=float(doc.get("energy_limit", 1.0)),
        min_period_ms=float(doc.get("min_period_ms", 1.0)),
        max_period_ms=float(doc.get("max_period_ms", 1000.0)),
    )


class Verdict(Enum):
    ACCEPT = "accept"
    CLAMP = "clamp"
    REJECT = "reject"


@dataclass(frozen=True)
class PolicyDecision:
    verdict: Verdict
    reason: str = ""
    period_ms: float | None = None    # effective period after clamping


class BudgetAccount:
    """Sliding one-second window of sensing time spent, in milliseconds."""

    def __init__(self, budget_ms_per_s: float, clock: SharedClock) -> None:
        self.budget_ms_per_s = budget_ms_per_s
        self._clock = clock
        self._spent: deque[tuple[int, float]] = deque()

    def _prune(self, now_ns: int) -> None:
        cutoff = now_ns - 1_000_000_000
        while self._spent and self._spent[0][0] < cutoff:
            self._spent.popleft()

    def spent_ms(self) -> float:
        self._prune(self._clock.now_ns())
        return sum(ms for _, ms in self._spent)

    def exhausted(self) -> bool:
        return self.spent_ms() >= self.budget_ms_per_s

    def charge(self, ms: float) -> None:
        self._spent.append((self._clock.now_ns(), ms))


def enforce_policy(policy: A1IsacPolicy,
                   proposed: ControlRequestPayload | SubscriptionRequestPayload,
                   budget: BudgetAccount | None = None) -> PolicyDecision:
    """Total, pure check of one request: always exactly one verdict."""
    if budget is not None and budget.exhausted():
        return PolicyDecision(Verdict.REJECT, "BUDGET_EXHAUSTED")

    if isinstance(proposed, SubscriptionRequestPayload):
        if proposed.mode == SubscriptionMode.EVENT:
            if proposed.trigger.empty:
                return PolicyDecision(Verdict.REJECT, "EMPTY_TRIGGER")
            return PolicyDecision(Verdict.ACCEPT)
        period = proposed.period_ms
    elif proposed.kind == CommandKind.SET_PERIOD:
        period = proposed.period_ms
    elif proposed.kind == CommandKind.SET_BEAM:
        return PolicyDecision(Verdict.ACCEPT)
    else:
        return PolicyDecision(Verdict.ACCEPT)

    if period <= 0:
        return PolicyDecision(Verdict.REJECT, "NON_POSITIVE_PERIOD")
    clamped = min(max(period, policy.min_period_ms), policy.max_period_ms)
    if clamped != period:
        return PolicyDecision(Verdict.CLAMP, "PERIOD_OUT_OF_BOUNDS", period_ms=clamped)
    return PolicyDecision(Verdict.ACCEPT, period_ms=period)


def check_beam(policy: A1IsacPolicy, beam_azimuth_deg: float) -> PolicyDecision:
    """Geographic-scope check for a proposed beam steering direction."""
    if policy.azimuth_in_scope(beam_azimuth_deg):
        return PolicyDecision(Verdict.ACCEPT)
    return PolicyDecision(Verdict.REJECT, "OUT_OF_GEOGRAPHIC_SCOPE")


@dataclass(frozen=True)
class LatencySample:
    """One instrumented telemetry (and optionally control) round."""

    sequence_number: int
    t0_ns: int
    t1_ns: int
    t_cmd_issue_ns: int | None = None
    t_cmd_applied_ns: int | None = None

    @property
    def telemetry_latency_ns(self) -> int:
        return self.t1_ns - self.t0_ns

    @property
    def control_latency_ns(self) -> int | None:
        if self.t_cmd_issue_ns is None or self.t_cmd_applied_ns is None:
            return None
        return self.t_cmd_applied_ns - self.t_cmd_issue_ns

    @property
    def closed_loop_ns(self) -> int | None:
        ctrl = self.control_latency_ns
        return None if ctrl is None else self.telemetry_latency_ns + ctrl


@dataclass
class ReceivedReport:
    report: SensingReport
    t1_ns: int
    arrival_monotonic: float


class XApp:
    """Near-RT control client for one dApp channel.

    A single receive loop stamps t1 on every indication and routes responses
    and acks to their waiting requests by correlation id. Control commands and
    subscriptions go through policy enforcement before anything is sent.
    """

    def __init__(self, channel: Channel, policy: A1IsacPolicy | None = None,
                 clock: SharedClock | None = None) -> None:
        self.channel = channel
        self.policy = policy or A1IsacPolicy()
        self.clock = clock or default_clock()
        self.budget = BudgetAccount(self.policy.temporal_budget_ms_per_s, self.clock)
        self.reports: list[ReceivedReport] = []
        self.samples: list[LatencySample] = []
        self.subscription_id: int | None = None
        self.current_period_ms: float | None = None
        self._corr = 0
        self._pending: dict[int, list] = {}
        self._pending_cond = threading.Condition()
        self._report_cond = threading.Condition()
        self.on_report: Callable[[ReceivedReport], None] | None = None
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    # -- receive loop -------------------------------------------------------

    def _recv_loop(self) -> None:
        while not self._stop.is_set():
            try:
                frame = self.channel.recv(timeout=0.1)
            except Timeout:
                continue
            except Disconnected:
                break
            t1 = self.clock.now_ns()
            arrival = time.monotonic()
            msg = decode_message(frame)
            if msg.msg_type == MsgType.INDICATION:
                assert isinstance(msg.payload, SensingReport)
                received = ReceivedReport(msg.payload, t1, arrival)
                with self._report_cond:
                    self.reports.append(received)
                    self._report_cond.notify_all()
                if self.on_report is not None:
                    self.on_report(received)
            else:
                with self._pending_cond:
                    self._pending.setdefault(msg.correlation_id, []).append(msg)
                    self._pending_cond.notify_all()

    def start(self) -> None:
        self._thread = threading.Thread(target=self._recv_loop, name="xapp-recv", daemon=True)
        self._thread.start()

    def stop(self, join_timeout: float = 5.0) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(join_timeout)

    def _await_reply(self, corr: int, timeout: float) -> E2SensMessage:
        deadline = time.monotonic() + timeout
        with self._pending_cond:
            while not self._pending.get(corr):
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise RequestTimeout(f"no reply for correlation id {corr}")
                self._pending_cond.wait(remaining)
            return self._pending[corr].pop(0)

    def _next_corr(self) -> int:
        self._corr += 1
        return self._corr

    # -- operations ---------------------------------------------------------

    def subscribe(self, mode: SubscriptionMode, *, period_ms: float = 0.0,
                  trigger: TriggerConfig = TriggerConfig(),
                  timeout: float = 5.0) -> int:
        """Negotiate a subscription; returns the allocated subscription id."""
        request = SubscriptionRequestPayload(mode, period_ms=period_ms, trigger=trigger)
        decision = enforce_policy(self.policy, request, self.budget)
        if decision.verdict == Verdict.REJECT:
            raise PolicyViolation(decision.reason)
        if mode == SubscriptionMode.PERIODIC and decision.verdict == Verdict.CLAMP:
            raise PolicyViolation(
                f"period {period_ms} ms outside "
                f"[{self.policy.min_period_ms}, {self.policy.max_period_ms}] ms"
            )
        corr = self._next_corr()
        self.channel.send(encode_message(E2SensMessage(
            MsgType.SUBSCRIPTION_REQUEST, corr, request)))
        reply = self._await_reply(corr, timeout)
        assert isinstance(reply.payload, SubscriptionResponsePayload)
        self.subscription_id = reply.payload.subscription_id
        if mode == SubscriptionMode.PERIODIC:
            self.current_period_ms = period_ms
        return self.subscription_id

    def _send_control(self, payload: ControlRequestPayload,
                      timeout: float) -> ControlAckPayload:
        corr = self._next_corr()
        self.channel.send(encode_message(E2SensMessage(
            MsgType.CONTROL_REQUEST, corr, payload)))
        reply = self._await_reply(corr, timeout)
        assert isinstance(reply.payload, ControlAckPayload)
        return reply.payload

    def set_period(self, period_ms: float, timeout: float = 5.0) -> LatencySample:
        """Change the reporting period; returns the control-latency sample."""
        cmd = ControlRequestPayload(CommandKind.SET_PERIOD,
                                    issued_at=self.clock.now_ns(),
                                    period_ms=period_ms)
        decision = enforce_policy(self.policy, cmd, self.budget)
        if decision.verdict == Verdict.REJECT:
            raise PolicyViolation(decision.reason)
        if decision.verdict == Verdict.CLAMP:
            raise PolicyViolation(
                f"period {period_ms} ms outside "
                f"[{self.policy.min_period_ms}, {self.policy.max_period_ms}] ms"
            )
        issued = self.clock.now_ns()
        ack = self._send_control(replace(cmd, issued_at=issued), timeout)
        self.current_period_ms = period_ms
        sample = LatencySample(
            sequence_number=-1, t0_ns=issued, t1_ns=issued,
            t_cmd_issue_ns=issued, t_cmd_applied_ns=ack.applied_at,
        )
        return sample

    def set_beam(self, beam_index: int, beam_azimuth_deg: float,
                 timeout: float = 5.0) -> ControlAckPayload:
        decision = check_beam(self.policy, beam_azimuth_deg)
        if decision.verdict == Verdict.REJECT:
            raise PolicyViolation(decision.reason)
        cmd = ControlRequestPayload(CommandKind.SET_BEAM,
                                    issued_at=self.clock.now_ns(),
                                    beam_index=beam_index)
        return self._send_control(cmd, timeout)

    def set_sic(self, enabled: bool, timeout: float = 5.0) -> ControlAckPayload:
        cmd = ControlRequestPayload(CommandKind.SET_SIC,
                                    issued_at=self.clock.now_ns(),
                                    sic_enabled=enabled)
        return self._send_control(cmd, timeout)

    def set_trigger(self, trigger: TriggerConfig, timeout: float = 5.0) -> ControlAckPayload:
        cmd = ControlRequestPayload(CommandKind.SET_TRIGGER,
                                    issued_at=self.clock.now_ns(),
                                    trigger=trigger)
        return self._send_control(cmd, timeout)

    def await_report(self, after_index: int, timeout: float = 5.0) -> ReceivedReport:
        """Block until a report beyond the given index arrives."""
        deadline = time.monotonic() + timeout
        with self._report_cond:
            while len(self.reports) <= after_index:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise RequestTimeout("no indication within deadline")
                self._report_cond.wait(remaining)
            return self.reports[after_index]

    def closed_loop_probe(self, timeout: float = 5.0) -> LatencySample:
        """One complete loop measurement: next indication plus a no-op control.

        The control is a period refresh to the current value, so the probe is
        side-effect free by construction.
        """
        if self.current_period_ms is None:
            raise ControlError("closed-loop probe needs an active periodic subscription")
        idx = len(self.reports)
        received = self.await_report(idx, timeout)
        issue = self.clock.now_ns()
        cmd = ControlRequestPayload(CommandKind.SET_PERIOD, issued_at=issue,
                                    period_ms=self.current_period_ms)
        ack = self._send_control(cmd, timeout)
        sample = LatencySample(
            sequence_number=received.report.sequence_number,
            t0_ns=received.report.t0,
            t1_ns=received.t1_ns,
            t_cmd_issue_ns=issue,
            t_cmd_applied_ns=ack.applied_at,
        )
        self.samples.append(sample)
        return sample


def write_sample_log(samples: list[LatencySample], path: str | Path) -> None:
    """Append-only CSV of latency samples."""
    lines = ["sequence_number,t0_ns,t1_ns,t_cmd_issue_ns,t_cmd_applied_ns"]
    for s in samples:
        lines.append(
            f"{s.sequence_number},{s.t0_ns},{s.t1_ns},"
            f"{'' if s.t_cmd_issue_ns is None else s.t_cmd_issue_ns},"
            f"{'' if s.t_cmd_applied_ns is None else s.t_cmd_applied_ns}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
