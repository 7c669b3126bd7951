import logging

import pytest

from qrw.errors import FormatError, ValidationError
from qrw.eval import read_qrels, read_run, read_topics, write_qrels, write_run, write_topics
from qrw.index import Ranking


def test_run_round_trip_bytes(tmp_path):
    rankings = [
        Ranking.from_scores("q1", {"a": 2.5, "b": 1.25, "c": 1.25}, "tagx"),
        Ranking.from_scores("q2", {"z": 0.000001}, "tagx"),
    ]
    write_run(rankings, tmp_path / "a.run")
    text = (tmp_path / "a.run").read_text()
    assert text.splitlines()[0] == "q1 Q0 a 1 2.500000 tagx"
    run = read_run(tmp_path / "a.run")
    write_run(run.values(), tmp_path / "b.run")
    assert (tmp_path / "a.run").read_bytes() == (tmp_path / "b.run").read_bytes()
    assert run["q1"].doc_ids == ["a", "b", "c"]


@pytest.mark.parametrize("body,line_no", [
    ("q1 Q0 a 1 2.0 t\nq1 Q0 b 3 1.0 t\n", 2),
    ("q1 Q0 a 1 2.0 t\nq1 Q0 b 2 1.0 t\nq1 Q0 c 2 0.5 t\n", 3),
    ("q1 Q0 a 1 2.0\n", 1),
    ("q1 Q0 a one 2.0 t\n", 1),
    ("q1 Q0 a 1 2.0 t\nq1 Q0 a 2 1.0 t\n", 2),
    ("q1 Q0 a 1 1.0 t\nq1 Q0 b 2 2.0 t\n", 2),
    ("q1 Q0 a 1 1.0 t\nq1 Q0 b 2 0.5 u\n", 2),
])
def test_malformed_run_reports_line(tmp_path, body, line_no):
    path = tmp_path / "bad.run"
    path.write_text(body)
    with pytest.raises(FormatError) as info:
        read_run(path)
    assert info.value.line_no == line_no
    assert f"line {line_no}" in str(info.value)


def test_qrels_round_trip_and_clamp(tmp_path, caplog):
    qrels = {"q1": {"a": 2, "b": 0}, "q2": {"c": 1}}
    write_qrels(qrels, tmp_path / "q.txt")
    assert read_qrels(tmp_path / "q.txt") == qrels
    (tmp_path / "neg.txt").write_text("q1 0 a -1\nq1 0 b 1\n")
    with caplog.at_level(logging.WARNING):
        assert read_qrels(tmp_path / "neg.txt") == {"q1": {"a": 0, "b": 1}}
    assert "clamped 1" in caplog.text


@pytest.mark.parametrize("body,line_no", [
    ("q1 0 a 1\nq1 0 a\n", 2),
    ("q1 0 a x\n", 1),
    ("q1 0 a 1\nq1 0 a 2\n", 2),
])
def test_malformed_qrels(tmp_path, body, line_no):
    (tmp_path / "q.txt").write_text(body)
    with pytest.raises(FormatError, match=f"line {line_no}"):
        read_qrels(tmp_path / "q.txt")


def test_topics_round_trip(tmp_path):
    topics = {"1": "do goldfish grow", "q-2": "ünïcode query"}
    write_topics(topics, tmp_path / "t.tsv")
    assert read_topics(tmp_path / "t.tsv") == topics
    with pytest.raises(ValidationError):
        write_topics({"1": "a\tb"}, tmp_path / "x.tsv")
    (tmp_path / "bad.tsv").write_text("1\tok\n2 no tab\n")
    with pytest.raises(FormatError, match="line 2"):
        read_topics(tmp_path / "bad.tsv")
