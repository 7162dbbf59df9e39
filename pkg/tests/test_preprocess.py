import numpy as np

from advent import preprocess, scenario
from advent.preprocess import build_count_series, interval_counts, windowize, windowize_arrays
from advent.scenario import EventStream, GroundTruth


def _stream(rows):
    times, senders, receivers = zip(*rows) if rows else ([], [], [])
    return EventStream(times, senders, receivers)


def test_count_series_direct():
    ev = _stream([(1.2, 9, 7), (1.9, 8, 7), (2.1, 9, 7)])
    cs = build_count_series(ev, 7)
    assert cs.counts == {1: 2, 2: 1}


def test_count_series_empty():
    cs = build_count_series(_stream([]), 7)
    assert cs.counts == {}


def test_count_series_matches_event_tally(small_scenario):
    # Oracle: direct per-event tally with floor-second binning.
    events, truth = small_scenario
    v = int(events.receivers[0])
    cs = build_count_series(events, v)
    tally = {}
    for e in events:
        if e.receiver == v:
            tally[int(e.time_s)] = tally.get(int(e.time_s), 0) + 1
    assert cs.counts == tally


def test_flood_dominates_counts(small_scenario):
    events, truth = small_scenario
    ws, we = truth.attack_windows[0]
    benign = sorted(set(truth.presence) - truth.attackers)
    v = next(u for u in benign if truth.presence[u][0] <= ws and truth.presence[u][1] >= we)
    cs = build_count_series(events, v)
    in_window = [cs.counts.get(t, 0) for t in range(int(ws), int(we))]
    before = [cs.counts.get(t, 0) for t in range(int(ws) - 50, int(ws))]
    assert min(in_window) > max(before)


def _truth(vehicle, span, windows=()):
    return GroundTruth(presence={vehicle: span}, attack_windows=list(windows))


def test_windowize_feature_order():
    series = preprocess.CountSeries(vehicle=1, counts={t: 10 + t for t in range(1, 13)})
    rows = windowize(series, _truth(1, (1.0, 13.0)), a=10)
    byt = {r.t: r for r in rows}
    assert list(byt[10].features) == [20, 19, 18, 17, 16, 15, 14, 13, 12, 11]


def test_windowize_zero_padding_before_join():
    series = preprocess.CountSeries(vehicle=1, counts={0: 5, 1: 6})
    rows = windowize(series, _truth(1, (0.0, 2.0)), a=3)
    assert list(rows[0].features) == [5, 0, 0]
    assert list(rows[1].features) == [6, 5, 0]


def test_windowize_labels():
    series = preprocess.CountSeries(vehicle=1, counts={})
    rows = windowize(series, _truth(1, (0.0, 10.0), windows=[(4.0, 7.0)]), a=2)
    labels = {r.t: r.label for r in rows}
    assert [labels[t] for t in range(10)] == [0, 0, 0, 0, 1, 1, 1, 0, 0, 0]


def test_windowize_a1_degenerate():
    series = preprocess.CountSeries(vehicle=1, counts={0: 3, 1: 1})
    rows = windowize(series, _truth(1, (0.0, 2.0)), a=1)
    assert [list(r.features) for r in rows] == [[3], [1]]


def test_windowize_conserves_events(small_scenario):
    events, truth = small_scenario
    for v in list(truth.presence)[:4]:
        series = build_count_series(events, v)
        secs, x, y = windowize_arrays(series, truth)
        inside = sum(c for t, c in series.counts.items()
                     if secs[0] <= t <= secs[-1]) if len(secs) else 0
        assert int(x[:, 0].sum()) == inside


def test_windowize_consecutive_shift(small_scenario):
    events, truth = small_scenario
    v = int(events.receivers[0])
    secs, x, y = windowize_arrays(build_count_series(events, v), truth)
    for i in range(1, min(50, len(secs))):
        assert np.array_equal(x[i, 1:], x[i - 1, :-1])


def test_interval_counts_normal_single_interval():
    ev = _stream([(t + 0.5, 2, 1) for t in range(60)])
    out = interval_counts(ev, 1, "normal")
    assert len(out) == 1
    assert out[0].per_sender == {2: 60}
    assert out[0].interval == (0.0, 60.0)


def test_interval_counts_alert_six_intervals():
    ev = _stream([(t + 0.5, 2, 1) for t in range(60)])
    out = interval_counts(ev, 1, "alert")
    assert len(out) == 6
    assert all(iv.per_sender == {2: 10} for iv in out)


def test_interval_counts_per_sender():
    ev = _stream([(i, 5, 1) for i in [0.1, 1.2, 3.3, 7.7, 9.9]])
    out = interval_counts(ev, 1, "alert")
    assert out[0].per_sender == {5: 5}


def test_interval_totals_match_count_series(small_scenario):
    events, truth = small_scenario
    v = int(events.receivers[0])
    total = build_count_series(events, v).total()
    assert sum(sum(iv.per_sender.values()) for iv in interval_counts(events, v, "alert")) == total
    assert sum(sum(iv.per_sender.values()) for iv in interval_counts(events, v, "normal")) == total


def test_export_feature_rows(tmp_path):
    series = preprocess.CountSeries(vehicle=1, counts={0: 3})
    rows = windowize(series, _truth(1, (0.0, 1.0)), a=3)
    path = tmp_path / "v1.csv"
    preprocess.export_feature_rows(path, rows)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,f0,f1,f2,label"
    assert lines[1].startswith("0,3.0,0.0,0.0,0")
