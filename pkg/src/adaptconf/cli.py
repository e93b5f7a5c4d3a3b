"""Command line: ``simulate``, ``replay`` and ``report``.

Log verbosity follows the ADAPTCONF_LOG environment variable (a logging
level name such as DEBUG or INFO; WARNING by default).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path
from types import SimpleNamespace
from typing import Optional, Sequence

from . import __version__
from .config import ScenarioConfig, control_hash, load_control_config, load_scenario
from .csvio import (
    SWITCH_COLUMNS,
    atomic_write_text,
    format_table,
    format_telemetry,
    format_timeline,
    parse_provenance,
    read_table,
    read_telemetry,
    read_timeline,
)
from .errors import AdaptConfError
from .metrics import aggregate_quality, bandwidth_rows, render_report, summarize
from .replay import replay_trace
from .session.runner import SessionReport, run_session

logger = logging.getLogger("adaptconf")

TELEMETRY_FILE = "telemetry.csv"
TIMELINE_FILE = "timeline.csv"
SWITCHES_FILE = "switches.csv"
QUALITY_FILE = "quality.csv"
QUALITY_COLUMNS = ("t_ms", "mode", "audio_jitter_ms", "video_jitter_ms", "rtt_ms", "frames", "freezes")


def _provenance(seed, chash: str, warm_up: float) -> dict:
    return {"seed": seed, "config": chash, "warm_up": f"{warm_up:g}"}


def _series_from_telemetry(path: Path, warm_up: Optional[float] = None) -> tuple[dict, float]:
    trace = read_telemetry(path)
    if warm_up is None:
        warm_up = float(trace.provenance.get("warm_up", 0.0))
    series: dict[str, dict[str, list[float]]] = {}
    prev = None
    for row in trace.rows:
        t0 = 0 if prev is None else prev.timestamp_ms
        sent0 = 0 if prev is None else prev.bytes_sent_cum
        recv0 = 0 if prev is None else prev.bytes_received_cum
        dt = (row.timestamp_ms - t0) / 1000.0
        prev = row
        if dt <= 0 or row.bytes_sent_cum < sent0 or row.bytes_received_cum < recv0:
            continue  # counter epoch restart
        if t0 / 1000.0 < warm_up - 1e-9:
            continue
        up = 8.0 * (row.bytes_sent_cum - sent0) / (1000.0 * dt)
        down = 8.0 * (row.bytes_received_cum - recv0) / (1000.0 * dt)
        s = series.setdefault(row.mode_label or "all", {"uplink": [], "downlink": [], "total": []})
        s["uplink"].append(up)
        s["downlink"].append(down)
        s["total"].append(up + down)
    return series, warm_up


def _series_from_timeline(path: Path) -> tuple[dict, float]:
    with path.open() as fh:
        first = fh.readline()
    warm_up = 0.0
    if first.startswith("#"):
        warm_up = float(parse_provenance(first).get("warm_up", 0.0))
    series: dict[str, dict[str, list[float]]] = {}
    prev_t = 0.0
    for row in read_timeline(path):
        t = int(row["t_ms"]) / 1000.0
        if prev_t >= warm_up - 1e-9:
            s = series.setdefault(row["interval_mode"], {"uplink": [], "downlink": [], "total": []})
            up, down = float(row["rate_tx"]), float(row["rate_rx"])
            s["uplink"].append(up)
            s["downlink"].append(down)
            s["total"].append(up + down)
        prev_t = t
    return series, warm_up


def _quality_rows(path: Path) -> list:
    out = []
    for r in read_table(path):
        out.append(SimpleNamespace(
            mode=r["mode"],
            audio_jitter_ms=float(r["audio_jitter_ms"]),
            video_jitter_ms=float(r["video_jitter_ms"]) if r["video_jitter_ms"] else None,
            rtt_ms=float(r["rtt_ms"]),
            freezes=int(r["freezes"]),
        ))
    return out


def collect_series(directory: Path) -> tuple[dict, float]:
    tel, tl = directory / TELEMETRY_FILE, directory / TIMELINE_FILE
    if tel.exists():
        return _series_from_telemetry(tel)
    if tl.exists():
        return _series_from_timeline(tl)
    raise FileNotFoundError(f"{tel}: telemetry CSV not found")


def build_report(directory: Path, meta: Optional[dict] = None):
    series, warm_up = collect_series(directory)
    qpath = directory / QUALITY_FILE
    quality = aggregate_quality(_quality_rows(qpath)) if qpath.exists() else None
    meta = dict(meta or {})
    meta.setdefault("warm_up", warm_up)
    return render_report(bandwidth_rows(series), quality, meta)


def _latency_stats(latencies: list[float]) -> Optional[dict]:
    if not latencies:
        return None
    s = summarize(latencies)
    return {"mean": s.mean, "median": s.median, "p95": s.p95, "n": s.n,
            "min": min(latencies), "max": max(latencies)}


def session_summary(report: SessionReport) -> dict:
    sc = report.scenario
    synth = [c.total for c in report.synthesis.chunks]
    return {
        "evaluation_window": sc.evaluation_window,
        "freezes": {"count": report.freezes.count, "total": report.freezes.total, "ratio": report.freezes.ratio},
        "audio_dropout_total": report.audio_dropout_total,
        "handover": {
            "switches": len(report.switches),
            "incomplete": sum(1 for s in report.switches if not s.complete),
            "latency": _latency_stats([s.latency for s in report.switches if s.complete]),
            "dropouts_attributable": math.fsum(report.switch_dropouts),
        },
        "synthesis_latency": _latency_stats(synth),
        "recovery": report.recovery,
        "accounting": report.accounting,
        "rng": report.rng,
    }


def write_session(report: SessionReport, out: Path) -> dict:
    """Write every artifact of one simulated run into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    sc = report.scenario
    prov = _provenance(sc.seed, sc.control_hash(), sc.warm_up)
    atomic_write_text(out / TELEMETRY_FILE, format_telemetry(report.telemetry, prov))
    atomic_write_text(out / TIMELINE_FILE, format_timeline(report.timeline, prov))
    switch_rows = [
        (f"{s.decide_t:.3f}", "" if s.complete_t is None else f"{s.complete_t:.6f}", s.from_mode.value,
         s.to_mode.value, "" if s.latency is None else f"{s.latency:.6f}")
        for s in report.switches
    ]
    atomic_write_text(out / SWITCHES_FILE, format_table(SWITCH_COLUMNS + ("audio_dropout",),
                                                        [r + (f"{d:.6f}",) for r, d in
                                                         zip(switch_rows, report.switch_dropouts)], prov))
    quality_rows = [
        (round(q.t * 1000), q.mode.value, f"{q.audio_jitter_ms:.3f}",
         "" if q.video_jitter_ms is None else f"{q.video_jitter_ms:.3f}", f"{q.rtt_ms:.3f}", q.frames, q.freezes)
        for q in report.quality
    ]
    atomic_write_text(out / QUALITY_FILE, format_table(QUALITY_COLUMNS, quality_rows, prov))
    meta = {"tool": "adaptconf", "version": __version__, "seed": sc.seed, "config_hash": sc.control_hash(),
            "scenario": sc.as_dict()}
    rendered = build_report(out, meta)
    data = dict(rendered.data)
    data["session"] = session_summary(report)
    atomic_write_text(out / "report.txt", rendered.text)
    atomic_write_text(out / "report.json", json.dumps(data, indent=2, sort_keys=True) + "\n")
    return data


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    out = Path(args.output)
    if args.repeat <= 1:
        write_session(run_session(scenario), out)
        print(f"wrote {out}")
        return 0
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    for i in range(args.repeat):
        run_dir = out / f"run_{i:03d}"
        report = run_session(scenario.with_seed(scenario.seed + i))
        runs.append(write_session(report, run_dir))
        logger.info("run %d (seed %d) written to %s", i, scenario.seed + i, run_dir)
    _write_pooled(out, [out / f"run_{i:03d}" for i in range(args.repeat)], runs, scenario)
    print(f"wrote {args.repeat} runs and pooled summary to {out}")
    return 0


def _write_pooled(out: Path, dirs: list[Path], runs: list[dict], scenario: ScenarioConfig) -> None:
    pooled: dict[str, dict[str, list[float]]] = {}
    quality = []
    for d in dirs:
        series, _ = collect_series(d)
        for mode, s in series.items():
            p = pooled.setdefault(mode, {"uplink": [], "downlink": [], "total": []})
            for key in p:
                p[key].extend(s[key])
        if (d / QUALITY_FILE).exists():
            quality.extend(_quality_rows(d / QUALITY_FILE))
    meta = {"tool": "adaptconf", "version": __version__, "runs": len(dirs),
            "seeds": [scenario.seed + i for i in range(len(dirs))]}
    rendered = render_report(bandwidth_rows(pooled), aggregate_quality(quality) or None, meta)
    data = dict(rendered.data)
    data["per_run"] = [{"seed": r["meta"]["seed"], "bandwidth": r["bandwidth"], "session": r["session"]} for r in runs]
    atomic_write_text(out / "pooled_report.txt", rendered.text)
    atomic_write_text(out / "pooled_report.json", json.dumps(data, indent=2, sort_keys=True) + "\n")


def cmd_replay(args) -> int:
    estimator, controller = load_control_config(args.config)
    result = replay_trace(args.csv, estimator, controller)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    seed = result.provenance.get("seed", "unknown")
    prov = _provenance(seed, control_hash(estimator, controller), result.warm_up)
    atomic_write_text(out / TIMELINE_FILE, format_timeline(result.timeline, prov))
    meta = {"tool": "adaptconf", "version": __version__, "source": str(args.csv), "seed": seed,
            "config_hash": prov["config"], "rows": len(result.timeline),
            "malformed_rows": [{"line": n, "reason": r} for n, r in result.malformed],
            "rejected_samples": [{"t": t, "reason": r} for t, r in result.rejected]}
    rendered = render_report(bandwidth_rows({m.value: s for m, s in result.rate_series().items()}), None, meta)
    text = rendered.text if not result.empty else "empty trace: no samples to replay\n" + rendered.text
    atomic_write_text(out / "report.txt", text)
    atomic_write_text(out / "report.json", rendered.json)
    print(f"replayed {len(result.timeline)} samples into {out}")
    return 0


def cmd_report(args) -> int:
    directory = Path(args.directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory}: not a directory")
    rendered = build_report(directory)
    atomic_write_text(directory / "report.txt", rendered.text)
    path = directory / "report.json"
    data = json.loads(path.read_text()) if path.exists() else {}
    data.update({k: v for k, v in rendered.data.items() if k != "meta"})
    data.setdefault("meta", rendered.data["meta"])
    atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")
    sys.stdout.write(rendered.text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptconf", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a simulated call from a scenario file")
    s.add_argument("scenario", help="scenario TOML file")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.add_argument("--repeat", type=int, default=1, help="number of runs with seeds base+i (default 1)")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("replay", help="replay a telemetry CSV through the controller")
    r.add_argument("csv", help="telemetry CSV")
    r.add_argument("--config", required=True, help="TOML with [estimator] and [controller] tables")
    r.add_argument("-o", "--output", required=True, help="output directory")
    r.set_defaults(func=cmd_replay)

    t = sub.add_parser("report", help="render tables from a run directory")
    t.add_argument("directory")
    t.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("ADAPTCONF_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if getattr(args, "repeat", 1) < 1:
        print("adaptconf: error: --repeat must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (AdaptConfError, OSError) as exc:
        print(f"adaptconf: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
