"""Acceptance criteria 1-10, each reported as one PASS/FAIL line."""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from adaptconf.cli import main
from adaptconf.config import ScenarioConfig, load_scenario
from adaptconf.controller import Controller, ControllerConfig, Mode, control_rate, demand_low_bitrate, reference_rate
from adaptconf.metrics import bandwidth_rows
from adaptconf.netsim import BurstLoss, ImpairmentProfile, Kind, Outcome, Packet, Segment, UniformLoss, run_link
from adaptconf.session.detectors import FreezeDetectorConfig, detect_freezes
from adaptconf.session.runner import run_session
from adaptconf.telemetry import CounterSample, Estimator
from conftest import record_acceptance

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def shifted(rng, n, mean, spread):
    x = rng.normal(0.0, spread, n)
    return list(x - x.mean() + mean)


def test_1_data_volume_arithmetic():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    series = {
        "AV1": {"uplink": shifted(rng, 3600, 1486.33, 200.0), "downlink": shifted(rng, 3600, 1418.05, 200.0)},
        "AI Mode": {"uplink": shifted(rng, 3600, 28.23, 8.0), "downlink": shifted(rng, 3600, 15.42, 4.0)},
    }
    rows = {r.mode: r for r in bandwidth_rows(series)}
    elapsed = time.perf_counter() - start
    av1, ai = rows["AV1"], rows["AI Mode"]
    checks = [
        abs(av1.total.mean - 2904.38) < 1e-6 and abs(ai.total.mean - 43.65) < 1e-6,
        abs(av1.volume.gb_per_hour - 1.31) <= 0.01,
        abs(ai.volume.gb_per_hour - 0.02) <= 0.01,
        all(abs(r.uplink.mean + r.downlink.mean - r.total.mean) <= 0.01 for r in rows.values()),
        elapsed < 1.0,
    ]
    ok = all(checks)
    record_acceptance(1, ok, f"Data/hour {av1.volume.gb_per_hour:.3f} GB and {ai.volume.gb_per_hour:.4f} GB "
                             f"(targets 1.31, 0.02 +/-0.01); additivity ok; {elapsed * 1000:.0f} ms")
    assert ok


def test_2_long_run_bandwidth_gap():
    scenario = load_scenario(SCENARIOS / "longrun.toml")
    start = time.perf_counter()
    rep = run_session(scenario)
    elapsed = time.perf_counter() - start
    series = rep.rate_series()
    normal_up = float(np.mean(series[Mode.NORMAL]["uplink"]))
    ai_up = float(np.mean(series[Mode.AI]["uplink"]))
    ai_total_median = bandwidth_rows({"ai": series[Mode.AI]})[0].total.median
    ratio = ai_up / normal_up
    entered_ai = [e for e in rep.timeline if e.decision.switched and e.decision.mode is Mode.AI]
    sustained = len(entered_ai) == 1 and rep.timeline[-1].decision.mode is Mode.AI
    ok = ratio < 0.05 and abs(ai_total_median - 32.80) <= 0.5 * 32.80 and elapsed < 30.0 and sustained
    chain = " -> ".join([rep.timeline[0].decision.mode.value] +
                        [e.decision.mode.value for e in rep.timeline if e.decision.switched])
    record_acceptance(2, ok, f"AI uplink {ai_up:.2f} / Normal {normal_up:.2f} kbps = {100 * ratio:.2f}% (< 5%); "
                             f"AI total median {ai_total_median:.2f} kbps (32.80 +/-50%); modes {chain}; "
                             f"wall {elapsed:.1f} s (< 30 s)")
    assert ok


def fuzzed_trace(rng, n):
    kind = rng.integers(0, 4)
    if kind == 0:
        return rng.uniform(0, 1500, n)
    if kind == 1:
        return np.clip(1000 + np.cumsum(rng.normal(0, 120, n)), 0, None)
    if kind == 2:
        levels = rng.uniform(0, 1500, rng.integers(2, 10))
        return np.repeat(levels, -(-n // len(levels)))[:n]
    return 550 + 500 * np.sign(np.sin(np.arange(n) * rng.uniform(0.05, 3.0))) + rng.normal(0, 50, n)


def test_3_hysteresis_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(20240501)
    cfg = ControllerConfig()
    n_stable = cfg.n_stable
    min_gap = math.inf
    total_switches = 0
    for _ in range(1000):
        ctl = Controller(cfg)
        last = None
        for k, c in enumerate(fuzzed_trace(rng, 300)):
            if ctl.step(float(k), float(c)).switched:
                total_switches += 1
                if last is not None:
                    min_gap = min(min_gap, k - last)
                last = k
    oscillation_switches = 0
    for period in range(2, n_stable):
        for low_len in range(1, period):
            for _ in range(5):
                lo = rng.uniform(0, cfg.tau_low)
                hi = rng.uniform(cfg.tau_low, 2 * cfg.tau_high)
                ctl = Controller(cfg)
                for k in range(400):
                    c = lo if (k % period) < low_len else hi
                    oscillation_switches += ctl.step(float(k), c).switched
    elapsed = time.perf_counter() - start
    ok = min_gap >= n_stable and oscillation_switches == 0 and elapsed < 10.0
    record_acceptance(3, ok, f"1000 fuzzed traces, {total_switches} switches, min spacing {min_gap} samples "
                             f"(N_stable {n_stable}); oscillation switches {oscillation_switches}; {elapsed:.1f} s")
    assert ok


def test_4_estimator_conservation():
    rng = np.random.default_rng(4)
    worst = 0.0
    ordering_ok = True
    for _ in range(100):
        n = int(rng.integers(5, 200))
        t = np.cumsum(rng.uniform(0.05, 2.0, n))
        tx = np.cumsum(rng.integers(0, 500_000, n))
        rx = np.cumsum(rng.integers(0, 500_000, n))
        lost = np.cumsum(rng.integers(0, 30, n))
        recv = np.cumsum(rng.integers(0, 400, n))
        est = Estimator()
        bits, prev_t = 0.0, 0.0
        for i in range(n):
            e = est.process(CounterSample(float(t[i]), int(tx[i]), int(rx[i]), int(lost[i]), int(recv[i]),
                                          float(rng.uniform(0, 0.4)), float(rng.uniform(0, 0.05))))
            bits += e.rate_tx * 1000.0 * (t[i] - prev_t)
            prev_t = t[i]
            ordering_ok &= e.capacity <= e.goodput <= e.rate_tx_smooth
        if tx[-1]:
            worst = max(worst, abs(bits / 8.0 - tx[-1]) / tx[-1])
    ok = worst <= 1e-6 and ordering_ok
    record_acceptance(4, ok, f"100 traces: worst relative byte error {worst:.2e} (<= 1e-6); "
                             f"capacity <= goodput <= smoothed on every sample: {ordering_ok}")
    assert ok


def packets(n, interval=0.001, size=200):
    return [Packet(i, size, i * interval, Kind.AUDIO, "a") for i in range(n)]


def loss_pattern(model, seed, n=100_000):
    prof = ImpairmentProfile.constant(1e6, loss=model, seed=seed)
    return np.array([e.outcome is Outcome.LOST for e in sorted(run_link(packets(n), prof), key=lambda e: e.packet.id)])


def test_5_loss_statistics():
    uni = loss_pattern(UniformLoss(0.05), 5)
    ge_model = BurstLoss(p_good_to_bad=0.01, p_bad_to_good=0.5)
    ge = loss_pattern(ge_model, 5)
    same = np.array_equal(loss_pattern(UniformLoss(0.05), 5), uni) and np.array_equal(loss_pattern(ge_model, 5), ge)
    ok = abs(uni.mean() - 0.05) <= 0.005 and abs(ge.mean() - 0.0196) <= 0.004 and same
    ok &= abs(ge_model.stationary_loss - 0.0196) < 5e-5
    record_acceptance(5, ok, f"uniform {uni.mean():.4f} (0.05 +/-0.005); Gilbert-Elliott {ge.mean():.4f} "
                             f"(analytic {ge_model.stationary_loss:.4f} +/-0.004); identical seeds identical: {same}")
    assert ok


def test_6_shaper_cap():
    cap = 1000.0
    prof = ImpairmentProfile.constant(cap, seed=6)
    interval = 1000 * 8 / (2 * cap * 1000)
    pkts = [Packet(i, 1000, i * interval, Kind.VIDEO, "a") for i in range(int(10.0 / interval))]
    events = run_link(pkts, prof)
    delivered = sum(e.packet.size for e in events if e.outcome is Outcome.DELIVERED and e.arrive_t < 10.0)
    kbps = delivered * 8 / 1000 / 10.0
    ok = abs(kbps - cap) <= 0.02 * cap
    record_acceptance(6, ok, f"2x overload through {cap:.0f} kbps cap delivered {kbps:.1f} kbps over 10 s (+/-2%)")
    assert ok


def test_7_freeze_oracle():
    cfg = FreezeDetectorConfig(0.5)
    steady = [k / 30 for k in range(301)]
    gappy = [0.0, 0.4, 1.2, 1.6, 2.8] + [3.0 + k / 30 for k in range(1711)]
    cases = [
        (detect_freezes(steady, cfg, 10.0), (0, 0.0, 0.0)),
        (detect_freezes(gappy, cfg, 60.0), (2, 2.0, round(2.0 / 60, 4))),
        (detect_freezes([], cfg, 60.0), (1, 60.0, 1.0)),
    ]
    got = [(c, round(t, 9), round(r, 4)) for (c, t, r), _ in cases]
    ok = got == [want for _, want in cases]
    record_acceptance(7, ok, f"fixtures steady/two gaps/total freeze -> {got}")
    assert ok


def test_8_handover_latency_bound():
    base = ScenarioConfig(duration=90.0, uplink=ImpairmentProfile(
        (Segment(0.0, 3000.0, 0.02, 0.005), Segment(40.0, 100.0, 0.02, 0.005))))
    d = base.synth.total
    f = 1.0 / base.session.synthetic_fps
    hi = d + 2 * f + base.session.handover_window
    latencies, dropouts, bad = [], 0.0, []
    for seed in range(50):
        rep = run_session(base.with_seed(seed))
        ai = [s for s in rep.switches if s.from_mode is Mode.NORMAL and s.to_mode is Mode.AI]
        dropouts += math.fsum(rep.switch_dropouts)
        if len(ai) != 1 or ai[0].latency is None or not d <= ai[0].latency <= hi:
            bad.append(seed)
        else:
            latencies.append(ai[0].latency)
    ok = not bad and dropouts == 0.0
    span = f"{min(latencies):.3f}-{max(latencies):.3f}" if latencies else "n/a"
    record_acceptance(8, ok, f"50 seeds: Normal->AI latency {span} s within [{d:.2f}, {hi:.2f}]; "
                             f"out of bound seeds {bad}; attributable audio dropout {dropouts:.3f} s")
    assert ok


def test_9_replay_round_trip(tmp_path):
    scenario = SCENARIOS / "step.toml"
    sim, rep = tmp_path / "sim", tmp_path / "rep"
    assert main(["simulate", str(scenario), "-o", str(sim)]) == 0
    assert main(["replay", str(sim / "telemetry.csv"), "--config", str(scenario), "-o", str(rep)]) == 0
    a, b = (sim / "timeline.csv").read_bytes(), (rep / "timeline.csv").read_bytes()
    ok = a == b
    modes = {line.split(",")[12] for line in a.decode().splitlines()[2:]}
    record_acceptance(9, ok, f"simulate -> telemetry.csv -> replay timeline byte-identical: {ok} "
                             f"({len(a)} bytes, modes {sorted(modes)})")
    assert ok


def test_10_demand_units():
    ctrl = control_rate(25, 68, 10)
    ref = reference_rate(400_000, 60)
    cfg = ControllerConfig()
    scaled = demand_low_bitrate(ControllerConfig(eta=0.5, gamma=0.5)).video / demand_low_bitrate(
        ControllerConfig(eta=1.0, gamma=1.0)).video
    ok = ctrl == 17.0 and round(ref, 3) == 6.667 and scaled == 0.125 and cfg.video_rate_normal * 0.125 == 175.0
    record_acceptance(10, ok, f"control {ctrl} kbps, reference {ref:.3f} kbps, LB video scale {scaled}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
