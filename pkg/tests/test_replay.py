import pytest

from adaptconf.config import ScenarioConfig
from adaptconf.controller import LADDER, ControllerConfig, Mode
from adaptconf.csvio import (
    TELEMETRY_COLUMNS,
    TelemetryCsvRow,
    format_telemetry,
    format_timeline,
    parse_provenance,
    provenance_line,
    read_telemetry,
    read_timeline,
)
from adaptconf.errors import ReplayError
from adaptconf.netsim import ImpairmentProfile, Segment, UniformLoss
from adaptconf.replay import replay_trace
from adaptconf.session.runner import run_session

HEADER = ",".join(TELEMETRY_COLUMNS[:7])


def write_csv(tmp_path, rows, header=HEADER, name="t.csv"):
    p = tmp_path / name
    p.write_text("\n".join([header, *rows]) + "\n")
    return p


def constant_rows(kbps, n, start=1):
    per_s = int(kbps * 125)
    return [f"{k * 1000},{k * per_s},{k * per_s},0,{50 * k},0.000,0.000" for k in range(start, start + n)]


def test_constant_1000kbps_stays_normal(tmp_path):
    res = replay_trace(write_csv(tmp_path, constant_rows(1000, 30)))
    assert res.modes == [Mode.NORMAL] * 30
    assert all(e.estimate.rate_tx == pytest.approx(1000.0) for e in res.timeline)
    assert res.timeline[-1].decision.state.n_up == 30


def test_frozen_counters_descend_to_audio_only(tmp_path):
    rows = [f"{k * 1000},0,0,0,0,0.000,0.000" for k in range(1, 21)]
    res = replay_trace(write_csv(tmp_path, rows))
    assert all(e.estimate.rate_tx == 0.0 and e.estimate.rate_rx == 0.0 for e in res.timeline)
    modes = res.modes
    # hand-stepped: AI once the low band persists for 5 samples, AudioOnly 5 samples later
    assert modes[:4] == [Mode.NORMAL] * 4
    assert modes[4:9] == [Mode.AI] * 5
    assert modes[9:] == [Mode.AUDIO_ONLY] * 11


def test_stalling_after_traffic_walks_down_ladder(tmp_path):
    rows = constant_rows(1000, 10) + [f"{k * 1000},1250000,1250000,0,500,0.000,0.000" for k in range(11, 60)]
    res = replay_trace(write_csv(tmp_path, rows))
    seq = [res.modes[0]] + [e.decision.mode for e in res.timeline if e.decision.switched]
    assert seq[-1] is Mode.AUDIO_ONLY
    assert all(LADDER.index(b) > LADDER.index(a) for a, b in zip(seq, seq[1:]))


def test_header_only_gives_empty_result(tmp_path):
    res = replay_trace(write_csv(tmp_path, []))
    assert res.empty and res.timeline == [] and res.malformed == []


def test_missing_or_wrong_header(tmp_path):
    with pytest.raises(ReplayError):
        replay_trace(write_csv(tmp_path, constant_rows(10, 3), header="a,b,c"))
    p = tmp_path / "none.csv"
    p.write_text("# adaptconf 0.1.0 seed=1\n")
    with pytest.raises(ReplayError):
        read_telemetry(p)


def test_malformed_rows_skipped_and_counted(tmp_path):
    rows = constant_rows(1000, 20)
    rows[5] = "6000,abc,0,0,0,0,0"
    rows[12] = "13000,1,2,3"
    res = replay_trace(write_csv(tmp_path, rows))
    assert [n for n, _ in res.malformed] == [7, 14]
    assert len(res.timeline) == 18


def test_too_many_malformed_rows_abort(tmp_path):
    rows = constant_rows(1000, 20)
    for i in (1, 4, 9):
        rows[i] = "x,y"
    with pytest.raises(ReplayError, match="malformed"):
        replay_trace(write_csv(tmp_path, rows))


def test_counter_reset_is_rejected_and_epoch_restarts(tmp_path):
    rows = constant_rows(1000, 5) + ["6000,100,100,0,1,0.000,0.000", "7000,125100,125100,0,51,0.000,0.000"]
    res = replay_trace(write_csv(tmp_path, rows))
    assert [t for t, _ in res.rejected] == [6.0]
    assert res.timeline[-1].estimate.rate_tx == pytest.approx(1000.0)


def test_optional_columns(tmp_path):
    rows = [r + f",{30 * i},normal" for i, r in enumerate(constant_rows(500, 3), 1)]
    trace = read_telemetry(write_csv(tmp_path, rows, header=",".join(TELEMETRY_COLUMNS)))
    assert trace.rows[2].frames_rendered_cum == 90 and trace.rows[2].mode_label == "normal"
    with pytest.raises(ReplayError):
        read_telemetry(write_csv(tmp_path, rows, header=HEADER + ",mode_label", name="u.csv"))


def test_row_round_trip():
    row = TelemetryCsvRow.from_measurement(1.2345, 10, 20, 1, 9, 0.0123456, 0.0009, 12, "ai")
    assert row.timestamp_ms == 1234 and row.rtt_ms == 12.346
    cells = row.cells(9)
    assert TelemetryCsvRow.parse(cells, 9) == row


def test_provenance_round_trip():
    line = provenance_line(seed=3, config="abc", warm_up="10")
    assert line == "# adaptconf 0.1.0 seed=3 config=abc warm_up=10\n"
    assert parse_provenance(line) == {"seed": "3", "config": "abc", "warm_up": "10"}


def test_simulated_export_replays_to_identical_timeline(tmp_path):
    prof = ImpairmentProfile((Segment(0.0, 3000.0, 0.02, 0.005, UniformLoss(0.005)),
                              Segment(40.0, 150.0, 0.02, 0.005, UniformLoss(0.005))), seed=9)
    sc = ScenarioConfig(duration=100.0, uplink=prof, seed=9,
                        controller=ControllerConfig(audio_rate=16.0, video_rate_normal=1470.0))
    rep = run_session(sc)
    prov = {"seed": 9, "config": sc.control_hash(), "warm_up": "10"}
    path = tmp_path / "telemetry.csv"
    path.write_text(format_telemetry(rep.telemetry, prov))
    res = replay_trace(path, sc.estimator, sc.controller)
    assert res.rejected == [] and res.malformed == []
    assert format_timeline(res.timeline, prov) == format_timeline(rep.timeline, prov)
    assert len({e.decision.mode for e in res.timeline}) > 1
    tl = tmp_path / "timeline.csv"
    tl.write_text(format_timeline(res.timeline, prov))
    assert read_timeline(tl)[0]["interval_mode"] == "normal"
