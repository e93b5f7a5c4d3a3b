"""Summary statistics and the bandwidth / quality report tables."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

BYTES_PER_GB = 10**9
BANDWIDTH_COLUMNS = (
    "Mode", "Uplink Mean (kbps)", "Downlink Mean (kbps)", "Total Mean (kbps)",
    "Total Median (kbps)", "Total p95 (kbps)", "Data/hour (GB)", "Data/5h (GB)",
)
QUALITY_COLUMNS = ("Mode", "Audio Jitter (ms)", "Video Jitter (ms)", "RTT (ms)", "Freeze")
GB_FOOTNOTE = ("Data volumes are decimal GB (1e9 bytes); 1 GiB = 1.073741824 GB. "
               "Data/5h is five times Data/hour.")
NO_QUALITY = "(quality data absent)"


@dataclass(frozen=True)
class SeriesSummary:
    mean: float
    median: float
    p95: float
    n: int


def nearest_rank(ordered: Sequence[float], pct: int) -> float:
    """The ceil(pct/100 * n)-th order statistic of an already sorted sample."""
    n = len(ordered)
    rank = max(1, -(-pct * n // 100))  # integer ceil, immune to float rounding
    return ordered[rank - 1]


def summarize(series: Iterable[float]) -> SeriesSummary:
    """Mean, lower median and nearest-rank p95 of a rate series."""
    values = sorted(float(v) for v in series)
    if not values:
        raise ValueError("cannot summarise an empty series")
    n = len(values)
    mean = math.fsum(values) / n
    mean = min(max(mean, values[0]), values[-1])
    median = values[(n - 1) // 2]
    return SeriesSummary(mean, median, nearest_rank(values, 95), n)


@dataclass(frozen=True)
class DataVolume:
    """Data moved at a constant mean rate; exact until formatted."""

    mean_kbps: Fraction
    duration: Fraction  # seconds

    @property
    def bytes(self) -> Fraction:
        return self.mean_kbps * 125 * self.duration

    @property
    def gb_per_hour(self) -> float:
        return float(self.gb_for_exact(3600))

    def gb_for_exact(self, duration) -> Fraction:
        return self.mean_kbps * 125 * Fraction(duration) / BYTES_PER_GB

    def gb_for(self, duration: float) -> float:
        return float(self.gb_for_exact(duration))

    @property
    def gb(self) -> float:
        return float(self.bytes / BYTES_PER_GB)


def data_volume(mean_total: float, duration: float) -> DataVolume:
    if mean_total < 0 or duration < 0:
        raise ValueError("mean_total and duration must be >= 0")
    return DataVolume(Fraction(mean_total), Fraction(duration))


@dataclass(frozen=True)
class BandwidthRow:
    mode: str
    uplink: SeriesSummary
    downlink: SeriesSummary
    total: SeriesSummary

    @property
    def volume(self) -> DataVolume:
        return data_volume(self.total.mean, 3600)

    def cells(self) -> list[str]:
        v = self.volume
        return [
            self.mode, f"{self.uplink.mean:.2f}", f"{self.downlink.mean:.2f}", f"{self.total.mean:.2f}",
            f"{self.total.median:.2f}", f"{self.total.p95:.2f}",
            f"{v.gb_per_hour:.3f}", f"{v.gb_for(5 * 3600):.3f}",
        ]

    def as_dict(self) -> dict:
        v = self.volume
        return {
            "mode": self.mode,
            "uplink": vars_of(self.uplink),
            "downlink": vars_of(self.downlink),
            "total": vars_of(self.total),
            "gb_per_hour": v.gb_per_hour,
            "gb_per_5h": v.gb_for(5 * 3600),
        }


def vars_of(s: SeriesSummary) -> dict:
    return {"mean": s.mean, "median": s.median, "p95": s.p95, "n": s.n}


def bandwidth_rows(series: Mapping[str, Mapping[str, Sequence[float]]]) -> list[BandwidthRow]:
    """One row per mode from per-sample ``uplink``/``downlink`` rates.

    The total series is the per-sample sum, so total mean equals uplink
    mean plus downlink mean up to rounding.
    """
    rows = []
    for mode in sorted(series):
        s = series[mode]
        up, down = list(s["uplink"]), list(s["downlink"])
        if not up:
            continue
        total = s.get("total") or [u + d for u, d in zip(up, down)]
        rows.append(BandwidthRow(str(mode), summarize(up), summarize(down), summarize(total)))
    return rows


@dataclass(frozen=True)
class QualitySummary:
    mode: str
    audio_jitter_ms: float
    video_jitter_ms: Optional[float]
    rtt_ms: float
    freeze_count: int

    def cells(self) -> list[str]:
        video = "-" if self.video_jitter_ms is None else f"{self.video_jitter_ms:.3f}"
        return [self.mode, f"{self.audio_jitter_ms:.3f}", video, f"{self.rtt_ms:.3f}", str(self.freeze_count)]

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "audio_jitter_ms": self.audio_jitter_ms,
            "video_jitter_ms": self.video_jitter_ms,
            "rtt_ms": self.rtt_ms,
            "freeze_count": self.freeze_count,
        }


def _mean(values: list[float]) -> Optional[float]:
    return math.fsum(values) / len(values) if values else None


def aggregate_quality(timeline: Iterable) -> list[QualitySummary]:
    """Per-mode mean jitter and RTT and summed freezes.

    Each timeline row needs ``mode``, ``audio_jitter_ms``, ``video_jitter_ms``
    (None when the interval carried no visual packets), ``rtt_ms`` and
    ``freezes``.
    """
    groups: dict[str, dict[str, list]] = {}
    for row in timeline:
        g = groups.setdefault(str(row.mode), {"audio": [], "video": [], "rtt": [], "freezes": []})
        g["audio"].append(row.audio_jitter_ms)
        if row.video_jitter_ms is not None:
            g["video"].append(row.video_jitter_ms)
        g["rtt"].append(row.rtt_ms)
        g["freezes"].append(row.freezes)
    return [
        QualitySummary(mode, _mean(g["audio"]), _mean(g["video"]), _mean(g["rtt"]), int(sum(g["freezes"])))
        for mode, g in sorted(groups.items())
    ]


def _table(columns: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(c), *(len(r[i]) for r in rows)) if rows else len(c) for i, c in enumerate(columns)]

    def line(cells):
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join([first, *rest]).rstrip()

    rule = "  ".join("-" * w for w in widths)
    return "\n".join([line(columns), rule, *(line(r) for r in rows)])


@dataclass(frozen=True)
class Report:
    text: str
    data: dict

    @property
    def json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"


def render_report(bandwidth: Sequence[BandwidthRow], quality: Optional[Sequence[QualitySummary]],
                  meta: Optional[Mapping] = None) -> Report:
    """Human-readable tables plus the same content as a JSON-ready dict."""
    parts = ["Bandwidth and data usage", _table(BANDWIDTH_COLUMNS, [r.cells() for r in bandwidth]), GB_FOOTNOTE, ""]
    parts.append("Audio/video jitter, RTT and freeze count")
    if quality:
        parts.append(_table(QUALITY_COLUMNS, [q.cells() for q in quality]))
    else:
        parts.append(NO_QUALITY)
    text = "\n".join(parts) + "\n"
    data = {
        "meta": dict(meta or {}),
        "bandwidth": [r.as_dict() for r in bandwidth],
        "quality": None if not quality else [q.as_dict() for q in quality],
    }
    return Report(text, data)
