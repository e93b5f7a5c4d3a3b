"""CSV formats: telemetry exports, mode timelines and switch records."""
from __future__ import annotations

import csv
import io
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import __version__
from .errors import ReplayError
from .loop import TimelineEntry
from .telemetry import CounterSample

logger = logging.getLogger(__name__)

TOOL = "adaptconf"
TELEMETRY_COLUMNS = (
    "timestamp_ms",
    "bytes_sent_cum",
    "bytes_received_cum",
    "packets_lost_cum",
    "packets_received_cum",
    "rtt_ms",
    "jitter_ms",
    "frames_rendered_cum",
    "mode_label",
)
REQUIRED_TELEMETRY = 7
MAX_MALFORMED_FRACTION = 0.10

TIMELINE_COLUMNS = (
    "t_ms", "interval_mode", "rate_tx", "rate_rx", "rate_tx_smooth", "rate_rx_smooth", "loss_ratio",
    "goodput", "capacity", "n_down", "n_up", "n_mid", "mode", "demand_total",
    "feasible", "eta", "gamma", "f_ctrl", "d_bits", "t_ref", "event",
)
SWITCH_COLUMNS = ("decide_t", "complete_t", "from_mode", "to_mode", "latency")


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the same directory and rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def provenance_line(**fields) -> str:
    parts = " ".join(f"{k}={v}" for k, v in fields.items())
    return f"# {TOOL} {__version__} {parts}".rstrip() + "\n"


def parse_provenance(line: str) -> dict[str, str]:
    tokens = line.lstrip("#").split()
    out = {}
    for tok in tokens[2:] if tokens[:1] == [TOOL] else tokens:
        key, sep, value = tok.partition("=")
        if sep:
            out[key] = value
    return out


@dataclass(frozen=True)
class TelemetryCsvRow:
    timestamp_ms: int
    bytes_sent_cum: int
    bytes_received_cum: int
    packets_lost_cum: int
    packets_received_cum: int
    rtt_ms: float
    jitter_ms: float
    frames_rendered_cum: Optional[int] = None
    mode_label: Optional[str] = None

    @classmethod
    def from_measurement(cls, t: float, sent: int, received: int, lost: int, recv: int,
                         rtt: float, jitter: float, frames: Optional[int] = None,
                         mode: Optional[str] = None) -> "TelemetryCsvRow":
        """Quantise a measurement exactly as it will appear in the CSV."""
        return cls(round(t * 1000), sent, received, lost, recv,
                   round(rtt * 1000, 3), round(jitter * 1000, 3), frames, mode)

    def to_sample(self) -> CounterSample:
        return CounterSample(
            t=self.timestamp_ms / 1000.0,
            bytes_tx_cum=self.bytes_sent_cum,
            bytes_rx_cum=self.bytes_received_cum,
            packets_lost_cum=self.packets_lost_cum,
            packets_recv_cum=self.packets_received_cum,
            rtt=self.rtt_ms / 1000.0,
            jitter=self.jitter_ms / 1000.0,
        )

    def cells(self, ncols: int) -> list[str]:
        values = [
            str(self.timestamp_ms), str(self.bytes_sent_cum), str(self.bytes_received_cum),
            str(self.packets_lost_cum), str(self.packets_received_cum),
            f"{self.rtt_ms:.3f}", f"{self.jitter_ms:.3f}",
            "" if self.frames_rendered_cum is None else str(self.frames_rendered_cum),
            self.mode_label or "",
        ]
        return values[:ncols]

    @classmethod
    def parse(cls, cells: Sequence[str], ncols: int) -> "TelemetryCsvRow":
        if len(cells) != ncols:
            raise ValueError(f"expected {ncols} fields, got {len(cells)}")
        ints = [int(c) for c in cells[:5]]
        if any(v < 0 for v in ints):
            raise ValueError("negative counter")
        rtt, jitter = float(cells[5]), float(cells[6])
        if not (rtt >= 0 and jitter >= 0):
            raise ValueError("rtt/jitter must be finite and >= 0")
        frames = int(cells[7]) if ncols > 7 and cells[7] != "" else None
        mode = cells[8] if ncols > 8 and cells[8] != "" else None
        return cls(*ints, rtt, jitter, frames, mode)


def format_telemetry(rows: Iterable[TelemetryCsvRow], provenance: dict,
                     ncols: int = len(TELEMETRY_COLUMNS)) -> str:
    buf = io.StringIO()
    buf.write(provenance_line(**provenance))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TELEMETRY_COLUMNS[:ncols])
    for row in rows:
        w.writerow(row.cells(ncols))
    return buf.getvalue()


@dataclass
class TelemetryTrace:
    rows: list[TelemetryCsvRow]
    provenance: dict[str, str]
    malformed: list[tuple[int, str]]  # (line number, reason)
    columns: tuple[str, ...]


def read_telemetry(path) -> TelemetryTrace:
    """Parse a telemetry CSV; malformed rows are skipped and reported.

    Raises ReplayError when the header is missing or wrong, or when more
    than 10% of the data rows are malformed.
    """
    path = Path(path)
    provenance: dict[str, str] = {}
    header: Optional[list[str]] = None
    rows, malformed = [], []
    total = 0
    with path.open(newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            if line.startswith("#"):
                if header is None:
                    provenance.update(parse_provenance(line))
                continue
            cells = next(csv.reader([line]))
            if header is None:
                header = [c.strip() for c in cells]
                ncols = len(header)
                if ncols < REQUIRED_TELEMETRY or tuple(header) != TELEMETRY_COLUMNS[:ncols]:
                    raise ReplayError(f"{path}: header must be {','.join(TELEMETRY_COLUMNS[:REQUIRED_TELEMETRY])}"
                                      " optionally followed by frames_rendered_cum,mode_label")
                continue
            total += 1
            try:
                rows.append(TelemetryCsvRow.parse(cells, ncols))
            except ValueError as exc:
                logger.warning("%s:%d: skipping malformed row (%s)", path, lineno, exc)
                malformed.append((lineno, str(exc)))
    if header is None:
        raise ReplayError(f"{path}: header row missing")
    if total and len(malformed) > MAX_MALFORMED_FRACTION * total:
        raise ReplayError(f"{path}: {len(malformed)} of {total} rows malformed (limit 10%)")
    return TelemetryTrace(rows, provenance, malformed, tuple(header))


def _f(x: float) -> str:
    return f"{x:.6f}"


def timeline_cells(entry: TimelineEntry) -> list[str]:
    est, dec = entry.estimate, entry.decision
    k = dec.knobs
    s = dec.state
    return [
        str(round(entry.sample.t * 1000)),
        dec.previous.value,
        _f(est.rate_tx), _f(est.rate_rx), _f(est.rate_tx_smooth), _f(est.rate_rx_smooth),
        _f(est.loss_ratio), _f(est.goodput), _f(est.capacity),
        str(s.n_down), str(s.n_up), str(s.n_mid),
        dec.mode.value, _f(dec.demand.total), "1" if dec.feasible else "0",
        _f(k.eta), _f(k.gamma), _f(k.f_ctrl), str(k.d_bits), _f(k.t_ref),
        entry.event,
    ]


def format_timeline(entries: Iterable[TimelineEntry], provenance: dict) -> str:
    buf = io.StringIO()
    buf.write(provenance_line(**provenance))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TIMELINE_COLUMNS)
    for e in entries:
        w.writerow(timeline_cells(e))
    return buf.getvalue()


def read_timeline(path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def format_table(columns: Sequence[str], rows: Iterable[Sequence], provenance: Optional[dict] = None) -> str:
    buf = io.StringIO()
    if provenance is not None:
        buf.write(provenance_line(**provenance))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if v is None else (f"{v:.6f}" if isinstance(v, float) else str(v)) for v in r])
    return buf.getvalue()


def read_table(path) -> list[dict[str, str]]:
    return read_timeline(path)
