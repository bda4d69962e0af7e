import io

import numpy as np
import pytest

from coxmix.exceptions import DataDomainError, EventFileParseError
from coxmix.events import (
    SequenceMatrix,
    aggregate_rows,
    load_events,
    load_labels,
    save_events,
    save_labels,
    single_rows,
    split_by_mark,
)


def test_from_records_sorts_within_cell():
    m = SequenceMatrix.from_records(
        1, 1, 2, 2.0, [(0, 0, 1.5, 1), (0, 0, 0.3, 2), (0, 0, 0.9, 1)]
    )
    times, marks = m.entry(0, 0)
    assert np.allclose(times, [0.3, 0.9, 1.5])
    assert list(marks) == [1, 0, 0]


def test_from_records_rejects_bad_indices():
    with pytest.raises(DataDomainError):
        SequenceMatrix.from_records(1, 1, 1, 2.0, [(1, 0, 0.5, 1)])
    with pytest.raises(DataDomainError):
        SequenceMatrix.from_records(1, 1, 1, 2.0, [(0, 1, 0.5, 1)])
    with pytest.raises(DataDomainError):
        SequenceMatrix.from_records(1, 1, 1, 2.0, [(0, 0, 0.5, 2)])


def test_time_zero_outside_domain():
    # events live on the half-open window (0, T]
    with pytest.raises(DataDomainError):
        SequenceMatrix.from_records(1, 1, 1, 2.0, [(0, 0, 0.0, 1)])
    SequenceMatrix.from_records(1, 1, 1, 2.0, [(0, 0, 2.0, 1)])


def test_event_count(tiny_matrix):
    assert tiny_matrix.event_count() == 6


def test_split_entry_partitions(tiny_matrix):
    per_mark = tiny_matrix.split_entry(0, 0)
    assert np.allclose(per_mark[0], [0.4])
    assert np.allclose(per_mark[1], [1.3])


def test_split_by_mark_rejects_unknown_mark():
    with pytest.raises(DataDomainError):
        split_by_mark(np.array([0.5]), np.array([3]), 2)


def test_split_by_mark_preserves_multiplicity():
    times = np.array([0.5, 0.5, 1.0])
    parts = split_by_mark(times, np.array([1, 1, 2]), 2)
    assert len(parts[0]) == 2


def test_single_rows_requires_one_slot(tiny_matrix):
    with pytest.raises(DataDomainError):
        single_rows(tiny_matrix)


def test_aggregate_rows_pools_slots(tiny_matrix):
    rows = aggregate_rows(tiny_matrix)
    assert rows.pooled_slots == 2
    assert np.allclose(rows.rows[0][0], [0.4, 0.9])
    assert np.allclose(rows.rows[1][1], [0.2, 1.9])
    assert rows.counts().sum() == 6


def test_subset_reindexes(tiny_matrix):
    sub = tiny_matrix.subset([1])
    assert sub.n == 1
    times, _ = sub.entry(0, 1)
    assert np.allclose(times, [1.7, 1.9])


def test_subset_validation(tiny_matrix):
    with pytest.raises(DataDomainError):
        tiny_matrix.subset([])
    with pytest.raises(DataDomainError):
        tiny_matrix.subset([0, 0])
    with pytest.raises(DataDomainError):
        tiny_matrix.subset([2])


def test_events_round_trip(tiny_matrix, tmp_path):
    path = tmp_path / "events.tsv"
    save_events(tiny_matrix, path)
    loaded = load_events(path)
    assert loaded.n == tiny_matrix.n
    assert loaded.m == tiny_matrix.m
    assert loaded.R == tiny_matrix.R
    assert loaded.T == tiny_matrix.T
    for i in range(2):
        for j in range(2):
            a, am = tiny_matrix.entry(i, j)
            b, bm = loaded.entry(i, j)
            assert np.allclose(a, b, atol=1e-9)
            assert list(am) == list(bm)


def test_save_events_byte_stable(tiny_matrix, tmp_path):
    p1 = tmp_path / "a.tsv"
    p2 = tmp_path / "b.tsv"
    save_events(tiny_matrix, p1)
    save_events(tiny_matrix, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_load_events_rejects_garbage():
    with pytest.raises(EventFileParseError):
        load_events(io.StringIO("not a header\n"))


def test_load_events_rejects_missing_column():
    buf = io.StringIO('{"n": 1, "m": 1, "r": 1, "t": 2.0}\n0\t0\n')
    with pytest.raises(EventFileParseError):
        load_events(buf)


def test_labels_round_trip(tmp_path):
    path = tmp_path / "labels.tsv"
    labels = np.array([1, 2, 2, 1])
    save_labels(labels, path)
    assert np.array_equal(load_labels(path, n=4), labels)


def test_load_labels_requires_full_coverage(tmp_path):
    path = tmp_path / "labels.tsv"
    path.write_text("0\t1\n2\t1\n")
    with pytest.raises(DataDomainError):
        load_labels(path, n=3)
