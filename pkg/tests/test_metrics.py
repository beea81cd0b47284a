import csv
import io

import pytest

from conftest import make_scenario
from sdwban.engine import run
from sdwban.metrics import CSV_COLUMNS, ConservationError, summarize, to_csv, report_text
from sdwban.model import TrafficClass
from sdwban.trace import TraceError, parse_lines


def rec(seq, event, t=0.0, node="x", **fields):
    return {"t": t, "seq": seq, "node": node, "event": event, "fields": fields}


def synthetic(latencies, residual=()):
    recs = [rec(0, "run_start", scenario="syn", seed=0)]
    for i, lat in enumerate(latencies):
        recs.append(rec(len(recs), "sample_emitted", packet_id=i, app="heart_rate", **{"class": "normal"}))
        recs.append(rec(len(recs), "delivered", t=lat, packet_id=i, latency=lat, **{"class": "normal"}))
    for pid in residual:
        recs.append(rec(len(recs), "sample_emitted", packet_id=pid, app="ecg", **{"class": "normal"}))
    recs.append(rec(len(recs), "run_end", residual_in_flight=list(residual), energy_j={"s0": 1.5}, nodes_dead=[]))
    return recs


def test_mean_of_two_latencies():
    rep = summarize(synthetic([2.0, 4.0]))
    n = rep.per_class[TrafficClass.NORMAL]
    assert n.latency_mean_s == 3.0 and n.delivery_ratio == 1.0
    assert n.latency_max_s == 4.0


def test_no_emergency_traffic_means_no_emergency_section():
    rep = summarize(synthetic([1.0]))
    assert rep.per_class[TrafficClass.EMERGENCY] is None
    assert "[emergency]" not in report_text(rep)


def test_reference_run_summary():
    trace, _ = run(make_scenario())
    rep = summarize(trace.records)
    n = rep.per_class[TrafficClass.NORMAL]
    assert (n.generated, n.delivered, rep.packet_ins) == (10, 10, 1)


def test_summary_is_pure():
    trace, _ = run(make_scenario())
    text = trace.dumps()
    a = to_csv([summarize(parse_lines(text.splitlines()))])
    b = to_csv([summarize(parse_lines(text.splitlines()))])
    assert a == b


def test_truncated_trace_names_last_record():
    recs = synthetic([1.0])[:-1]
    with pytest.raises(TraceError, match=f"seq={recs[-1]['seq']}"):
        summarize(recs)


def test_corrupt_line_names_last_valid_record():
    trace, _ = run(make_scenario())
    lines = trace.dumps().splitlines()
    lines[5] = lines[5][:10]
    with pytest.raises(TraceError, match="seq=4"):
        parse_lines(lines)


def test_lost_packet_is_a_conservation_error():
    recs = synthetic([1.0])
    recs.insert(1, rec(99, "sample_emitted", packet_id=77, app="ecg", **{"class": "normal"}))
    with pytest.raises(ConservationError):
        summarize(recs)


def test_double_terminal_is_a_conservation_error():
    recs = synthetic([1.0])
    recs.insert(-1, rec(98, "drop", packet_id=0, reason="overflow", **{"class": "normal"}))
    with pytest.raises(ConservationError):
        summarize(recs)


def test_residual_counts_toward_conservation():
    rep = summarize(synthetic([1.0], residual=[5, 6]))
    assert rep.residual_in_flight == 2
    assert rep.per_class[TrafficClass.NORMAL].delivery_ratio == pytest.approx(1 / 3)


def test_csv_has_stable_columns_and_empty_for_absent():
    text = to_csv([summarize(synthetic([2.0, 4.0]))])
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == CSV_COLUMNS
    assert rows[0]["emergency_delivery_ratio"] == ""
    assert float(rows[0]["normal_latency_mean_s"]) == 3.0
    assert float(rows[0]["energy_total_j"]) == 1.5
