"""Latency measurement harness: cold-start, frame-draw, migration, RTT.

Methodology: n timed runs (default 1000) preceded by a configurable warm-up,
reported as mean / sample standard deviation / nearest-rank 99th percentile in
milliseconds. Published hardware figures (RTX 2080, Jetson TX2, and the h264
video-decode baseline) are rendered as tagged external reference rows, never
as measured values.
"""

from __future__ import annotations

import json
import math
import socket
import struct
import time
from dataclasses import dataclass
from enum import Enum

from . import fixtures
from .errors import Empty, InvalidModel
from .reflect import SpirvModule
from .session import Session, SessionSnapshot

DEFAULT_ITERATIONS = 1000
DEFAULT_WARMUP = 10
NS_PER_MS = 1_000_000


class Scenario(Enum):
    ColdStart = "cold-start"
    FrameDraw = "frame-draw"
    Migration = "migrate"
    Rtt = "rtt"


def stats(samples) -> tuple[float, float, float]:
    """(mean, sample sd, nearest-rank p99) over raw sample values.

    sd is 0 for n < 2 (flagged on the report); p99 is the ascending-sorted
    value at index ceil(0.99 * n) - 1.
    """
    n = len(samples)
    if n == 0:
        raise Empty("no samples")
    mean = sum(samples) / n
    if n >= 2:
        sd = math.sqrt(sum((x - mean) ** 2 for x in samples) / (n - 1))
    else:
        sd = 0.0
    ordered = sorted(samples)
    p99 = ordered[math.ceil(0.99 * n) - 1]
    return mean, sd, p99


@dataclass
class LatencyReport:
    scenario: Scenario
    samples: list[int]                      # nanoseconds
    label: str = "measured"

    def __post_init__(self):
        if not self.samples:
            raise Empty(f"no samples for {self.scenario.value}")

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def sd_flagged(self) -> bool:
        return self.n < 2

    def _stats_ms(self) -> tuple[float, float, float]:
        mean, sd, p99 = stats(self.samples)
        return mean / NS_PER_MS, sd / NS_PER_MS, p99 / NS_PER_MS

    @property
    def mean_ms(self) -> float:
        return self._stats_ms()[0]

    @property
    def sd_ms(self) -> float:
        return self._stats_ms()[1]

    @property
    def p99_ms(self) -> float:
        return self._stats_ms()[2]

    def to_json(self, raw: bool = False) -> str:
        mean, sd, p99 = self._stats_ms()
        doc = {
            "scenario": self.scenario.value,
            "n": self.n,
            "mean_ms": mean,
            "sd_ms": sd,
            "p99_ms": p99,
        }
        if self.label != "measured":
            doc["label"] = self.label
        if raw:
            doc["samples"] = list(self.samples)
        return json.dumps(doc, sort_keys=False)


# external reference rows: (label, mean_ms, sd_ms, p99_ms or None)
PAPER_REFERENCES = {
    Scenario.ColdStart: [
        ("RTX 2080 (published reference)", 0.7, 0.2, 1.4),
        ("Jetson TX2 (published reference)", 1.8, 0.5, 4.3),
    ],
    Scenario.FrameDraw: [
        ("RTX 2080 (published reference)", 0.39, 0.4, 2.2),
        ("Jetson TX2 (published reference)", 0.60, 0.4, 1.2),
    ],
    Scenario.Migration: [
        ("cold-start-scale reference (published)", None, None, 1.4),
    ],
    Scenario.Rtt: [],
}

H264_BASELINE = ("Baseline: Samsung S7, h264 video decode (external reference)",
                 8.3, 1.1, None)


def _fmt(value) -> str:
    return "-" if value is None else f"{value:.1f}"


def render_table(reports: list[LatencyReport]) -> str:
    """Paper-style columns (AVG, SD, 99th), milliseconds, 1-decimal rounding."""
    lines = []
    width = max([len(H264_BASELINE[0])]
                + [len(r.label) for r in reports]
                + [len(row[0]) for rows in PAPER_REFERENCES.values() for row in rows])
    for report in reports:
        mean, sd, p99 = report._stats_ms()
        lines.append(f"scenario: {report.scenario.value} (n={report.n})")
        lines.append(f"{'':{width}s} {'AVG':>8s} {'SD':>8s} {'99th':>8s}")
        sd_txt = _fmt(sd) + ("*" if report.sd_flagged else "")
        lines.append(f"{report.label:{width}s} {_fmt(mean):>8s} {sd_txt:>8s} {_fmt(p99):>8s}")
        for label, rmean, rsd, rp99 in PAPER_REFERENCES.get(report.scenario, []):
            lines.append(f"{label:{width}s} {_fmt(rmean):>8s} {_fmt(rsd):>8s} {_fmt(rp99):>8s}")
        label, bmean, bsd, bp99 = H264_BASELINE
        lines.append(f"{label:{width}s} {_fmt(bmean):>8s} {_fmt(bsd):>8s} {_fmt(bp99):>8s}")
        if report.sd_flagged:
            lines.append("* sd requires n >= 2; reported as 0")
        lines.append("")
    return "\n".join(lines)


# --- budget model --------------------------------------------------------------


@dataclass(frozen=True)
class BudgetModel:
    refresh_hz: float = 120.0
    sync_ms: float = 1.0
    access_ms_uplink: float = 0.5
    access_ms_downlink: float = 0.5

    @property
    def device_budget_ms(self) -> float:
        return 1000.0 / self.refresh_hz - self.sync_ms


@dataclass(frozen=True)
class BudgetVerdict:
    device_budget_ms: float
    p99_ms: float
    headroom_ms: float           # device budget minus measured p99
    access_ms: float             # uplink + downlink
    after_access_ms: float       # headroom with the access delay subtracted
    fits: bool

    def table(self) -> str:
        rows = [
            ("device budget (1000/refresh - sync)", self.device_budget_ms),
            ("measured p99", self.p99_ms),
            ("headroom", self.headroom_ms),
            ("access delay (uplink + downlink)", -self.access_ms),
            ("remaining for server delay", self.after_access_ms),
        ]
        out = [f"{name:40s} {value:8.2f} ms" for name, value in rows]
        out.append(f"{'verdict':40s} {'fits' if self.fits else 'exceeds budget':>11s}")
        return "\n".join(out)


def check_budget(report: LatencyReport, model: BudgetModel) -> BudgetVerdict:
    budget = model.device_budget_ms
    if budget <= 0:
        raise InvalidModel(
            f"device budget {budget:.3f} ms is not positive "
            f"(refresh {model.refresh_hz} Hz, sync {model.sync_ms} ms)"
        )
    p99 = report.p99_ms
    access = model.access_ms_uplink + model.access_ms_downlink
    headroom = budget - p99
    return BudgetVerdict(
        device_budget_ms=budget,
        p99_ms=p99,
        headroom_ms=headroom,
        access_ms=access,
        after_access_ms=headroom - access,
        fits=headroom >= 0,
    )


# --- scenarios -----------------------------------------------------------------


def run_cold_start(target, iterations: int = DEFAULT_ITERATIONS,
                   warmup: int = DEFAULT_WARMUP,
                   elements: int = fixtures.MULTIPLY_ELEMENTS) -> LatencyReport:
    """Timed from pipeline creation through output readback, per iteration.

    Module upload is excluded (done once up front); the timed leg is
    create pipeline -> write inputs -> dispatch -> read back the output.
    """
    module_bytes = fixtures.multiply_kernel()
    module_hash = target.load_module(module_bytes)
    size = elements * 4
    target.alloc(1, size)
    target.alloc(2, size)
    a, b = fixtures.multiply_inputs(elements)
    groups = (elements // 64, 1, 1)
    bindings = [(0, 0, 1), (0, 1, 2)]

    samples = []
    for i in range(warmup + iterations):
        t0 = time.perf_counter_ns()
        pipeline = target.create_pipeline(module_hash, "main")
        target.write(1, 0, bytes(a))
        target.write(2, 0, bytes(b))
        target.dispatch(pipeline, groups, bindings)
        target.read(2, 0, size)
        elapsed = time.perf_counter_ns() - t0
        if i >= warmup:
            samples.append(elapsed)
    return LatencyReport(scenario=Scenario.ColdStart, samples=samples)


def run_frame_draw(target, frames: int = DEFAULT_ITERATIONS,
                   resolution: tuple[int, int] = (1280, 720),
                   warmup: int = DEFAULT_WARMUP) -> LatencyReport:
    """Per-frame dispatch + readback with a warm pipeline."""
    if frames == 0:
        raise Empty("frames must be >= 1")
    w, h = resolution
    pixels = w * h
    groups = ((pixels + 63) // 64, 1, 1)
    fb_size = pixels * 4

    module_hash = target.load_module(fixtures.frame_kernel())
    pipeline = target.create_pipeline(module_hash, "main")
    target.alloc(1, 4)        # { uint frame }
    target.alloc(2, fb_size)  # framebuffer
    bindings = [(0, 0, 1), (0, 1, 2)]

    samples = []
    for i in range(warmup + frames):
        t0 = time.perf_counter_ns()
        target.write(1, 0, struct.pack("<I", i))
        target.dispatch(pipeline, groups, bindings)
        target.read(2, 0, fb_size)
        elapsed = time.perf_counter_ns() - t0
        if i >= warmup:
            samples.append(elapsed)
    return LatencyReport(scenario=Scenario.FrameDraw, samples=samples)


@dataclass
class MigrationBenchResult:
    export: LatencyReport
    transfer: LatencyReport
    import_: LatencyReport
    total: LatencyReport
    failures: int = 0

    def reports(self) -> list[LatencyReport]:
        return [self.export, self.transfer, self.import_, self.total]


def _loopback_transfer(data: bytes) -> int:
    """Push the snapshot through a loopback socket pair; returns elapsed ns."""
    left, right = socket.socketpair()
    try:
        t0 = time.perf_counter_ns()
        view = memoryview(data)
        received = bytearray()
        left.setblocking(False)
        sent = 0
        while sent < len(view) or len(received) < len(data):
            if sent < len(view):
                try:
                    sent += left.send(view[sent : sent + (1 << 20)])
                except BlockingIOError:
                    pass
            if len(received) < len(data):
                chunk = right.recv(1 << 20)
                received.extend(chunk)
        elapsed = time.perf_counter_ns() - t0
        assert bytes(received) == data
        return elapsed
    finally:
        left.close()
        right.close()


def run_migration_bench(source: Session, iterations: int = 100,
                        warmup: int = DEFAULT_WARMUP,
                        tamper: bool = False) -> MigrationBenchResult:
    """Repeated export -> loopback transfer -> import into a fresh session."""
    export_ns, transfer_ns, import_ns, total_ns = [], [], [], []
    failures = 0
    for i in range(warmup + iterations):
        t0 = time.perf_counter_ns()
        snapshot = source.export_session()
        data = snapshot.to_bytes()
        t1 = time.perf_counter_ns()
        transfer = _loopback_transfer(data)
        if tamper:
            data = bytearray(data)
            data[len(data) // 2] ^= 0x01
            data = bytes(data)
        t2 = time.perf_counter_ns()
        fresh = Session()
        try:
            fresh.import_session(SessionSnapshot.from_bytes(data))
        except Exception:
            failures += 1
            continue
        t3 = time.perf_counter_ns()
        if i >= warmup:
            export_ns.append(t1 - t0)
            transfer_ns.append(transfer)
            import_ns.append(t3 - t2)
            total_ns.append((t1 - t0) + transfer + (t3 - t2))
    if not total_ns and failures:
        raise Empty(f"all {failures} migration iterations failed")
    mk = lambda label, samples: LatencyReport(
        scenario=Scenario.Migration, samples=samples, label=label
    )
    return MigrationBenchResult(
        export=mk("export", export_ns),
        transfer=mk("transfer (loopback)", transfer_ns),
        import_=mk("import", import_ns),
        total=mk("total", total_ns),
        failures=failures,
    )


def run_rtt(conn, iterations: int = DEFAULT_ITERATIONS,
            warmup: int = DEFAULT_WARMUP) -> LatencyReport:
    from .wire import measure_rtt

    samples = []
    for i in range(warmup + iterations):
        rtt = measure_rtt(conn)
        if i >= warmup:
            samples.append(rtt)
    return LatencyReport(scenario=Scenario.Rtt, samples=samples)
