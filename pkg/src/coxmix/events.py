"""Event-sequence data model, file ingestion and row aggregation.

Data are an n x m matrix of marked event lists: account i observed over m
repeated slots (days), each entry a finite list of (time, mark) pairs with
times in (0, T] and marks in {1..R}.  Duplicate timestamps are permitted;
all collections are multisets, since pooling slots can make times collide.

File format
-----------
Line 1 is a JSON header ``{"n": …, "m": …, "r": …, "t": …}`` declaring the
account count, slot count, mark count and window length.  Every following
non-empty line is one event: ``account<TAB>slot<TAB>time<TAB>mark`` with
0-based account/slot indices, decimal times with up to 9 fractional
digits, and 1-based marks.  T is declared, never inferred from the data,
because inferring it from the max event time would bias edge correction.

Internally marks are stored 0-based; user-facing label and mark values in
files stay 1-based.
"""

import json

import numpy as np

from .exceptions import DataDomainError, EventFileParseError

_TIME_FORMAT = "%.9f"


def _as_sorted_times(values):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise DataDomainError("event times must form a 1-D sequence")
    arr = np.sort(arr)
    arr.flags.writeable = False
    return arr


class SequenceMatrix:
    """Immutable n x m matrix of marked event sequences on (0, T].

    ``entries[i][j]`` holds a pair of aligned arrays (times, marks) sorted
    by time, with marks 0-based.  Construct via :meth:`from_records` or
    :func:`load_events`.
    """

    __slots__ = ("n", "m", "R", "T", "_entries")

    def __init__(self, n, m, R, T, entries):
        n, m, R = int(n), int(m), int(R)
        T = float(T)
        if n < 1 or m < 1 or R < 1:
            raise DataDomainError(
                "need n >= 1, m >= 1, R >= 1; got n=%d, m=%d, R=%d" % (n, m, R)
            )
        if not np.isfinite(T) or T <= 0.0:
            raise DataDomainError("window length T must be positive, got %r" % T)
        self.n = n
        self.m = m
        self.R = R
        self.T = T
        self._entries = entries

    @classmethod
    def from_records(cls, n, m, R, T, records):
        """Build a matrix from an iterable of (account, slot, time, mark).

        Marks are 1-based in the records.  Unknown account or slot indices
        and out-of-domain times or marks raise :class:`DataDomainError`.
        """
        n, m, R = int(n), int(m), int(R)
        T = float(T)
        buckets = [[([], []) for _ in range(m)] for _ in range(n)]
        for rec in records:
            account, slot, time, mark = rec
            account = int(account)
            slot = int(slot)
            time = float(time)
            mark = int(mark)
            if not 0 <= account < n:
                raise DataDomainError(
                    "unknown account index %d in record %r (n=%d)"
                    % (account, tuple(rec), n)
                )
            if not 0 <= slot < m:
                raise DataDomainError(
                    "unknown slot index %d in record %r (m=%d)"
                    % (slot, tuple(rec), m)
                )
            if not 0.0 < time <= T:
                raise DataDomainError(
                    "time %r outside (0, %g] in record %r" % (time, T, tuple(rec))
                )
            if not 1 <= mark <= R:
                raise DataDomainError(
                    "mark %d outside {1..%d} in record %r" % (mark, R, tuple(rec))
                )
            tlist, mlist = buckets[account][slot]
            tlist.append(time)
            mlist.append(mark - 1)
        entries = []
        for i in range(n):
            row = []
            for j in range(m):
                tlist, mlist = buckets[i][j]
                times = np.asarray(tlist, dtype=float)
                marks = np.asarray(mlist, dtype=np.int64)
                order = np.argsort(times, kind="stable")
                times = times[order]
                marks = marks[order]
                times.flags.writeable = False
                marks.flags.writeable = False
                row.append((times, marks))
            entries.append(tuple(row))
        return cls(n, m, R, T, tuple(entries))

    def entry(self, account, slot):
        """Return the (times, marks) pair for one matrix cell."""
        return self._entries[account][slot]

    def split_entry(self, account, slot):
        """Per-mark sorted time arrays for one cell, a list of length R."""
        times, marks = self._entries[account][slot]
        return split_by_mark(times, marks + 1, self.R)

    def event_count(self):
        """Total number of events over all cells."""
        return sum(
            len(self._entries[i][j][0])
            for i in range(self.n)
            for j in range(self.m)
        )

    def iter_records(self):
        """Yield (account, slot, time, mark) with 1-based marks, in file order."""
        for i in range(self.n):
            for j in range(self.m):
                times, marks = self._entries[i][j]
                for t, r in zip(times, marks):
                    yield i, j, float(t), int(r) + 1

    def subset(self, accounts):
        """New matrix keeping the given accounts, reindexed to 0..len-1."""
        accounts = np.asarray(accounts, dtype=np.int64)
        if accounts.ndim != 1 or accounts.size == 0:
            raise DataDomainError("account subset must be a non-empty index list")
        if accounts.min() < 0 or accounts.max() >= self.n:
            raise DataDomainError("account subset indices out of range")
        if np.unique(accounts).size != accounts.size:
            raise DataDomainError("account subset has duplicates")
        entries = tuple(self._entries[i] for i in accounts)
        return SequenceMatrix(accounts.size, self.m, self.R, self.T, entries)


class RowSet:
    """Per-account, per-mark sorted event times: the unit the fitter consumes.

    ``rows[i][r]`` is a sorted time array.  ``pooled_slots`` records how
    many slots were pooled into each row (1 for raw single-slot data); the
    multi-level learner uses it for intensity rescaling.
    """

    __slots__ = ("rows", "R", "T", "pooled_slots")

    def __init__(self, rows, R, T, pooled_slots=1):
        self.rows = rows
        self.R = int(R)
        self.T = float(T)
        self.pooled_slots = int(pooled_slots)

    @property
    def n(self):
        return len(self.rows)

    def counts(self):
        """Event counts per (account, mark), shape (n, R)."""
        out = np.zeros((self.n, self.R), dtype=np.int64)
        for i, row in enumerate(self.rows):
            for r in range(self.R):
                out[i, r] = len(row[r])
        return out


def split_by_mark(times, marks, R):
    """Partition events by mark into R sorted time arrays.

    ``marks`` are 1-based and must lie in {1..R}.  The concatenation of the
    output lists is a permutation of the input times.
    """
    times = np.asarray(times, dtype=float)
    marks = np.asarray(marks, dtype=np.int64)
    if times.shape != marks.shape:
        raise DataDomainError("times and marks must have equal length")
    R = int(R)
    if times.size and (marks.min() < 1 or marks.max() > R):
        bad = marks[(marks < 1) | (marks > R)][0]
        raise DataDomainError("mark %d outside {1..%d}" % (bad, R))
    return [_as_sorted_times(times[marks == r + 1]) for r in range(R)]


def single_rows(matrix):
    """View an m=1 matrix as a RowSet (the single-level fitting input)."""
    if matrix.m != 1:
        raise DataDomainError(
            "single_rows requires m=1, got m=%d; aggregate_rows handles m>1"
            % matrix.m
        )
    rows = [matrix.split_entry(i, 0) for i in range(matrix.n)]
    return RowSet(rows, matrix.R, matrix.T, pooled_slots=1)


def aggregate_rows(matrix):
    """Pool each account's slots into one row per mark (multiset union).

    Event counts are preserved exactly per (account, mark); duplicates
    arising from the union are kept.  The returned RowSet records
    ``pooled_slots = m`` for later intensity rescaling.
    """
    rows = []
    for i in range(matrix.n):
        per_mark = [[] for _ in range(matrix.R)]
        for j in range(matrix.m):
            times, marks = matrix.entry(i, j)
            for r in range(matrix.R):
                per_mark[r].append(times[marks == r])
        rows.append([_as_sorted_times(np.concatenate(parts)) for parts in per_mark])
    return RowSet(rows, matrix.R, matrix.T, pooled_slots=matrix.m)


def _open_lines(source):
    if hasattr(source, "read"):
        data = source.read()
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        return data.splitlines()
    with open(source, "rb") as fh:
        return fh.read().decode("utf-8").splitlines()


def load_events(source):
    """Read an event file (path or stream) into a SequenceMatrix.

    The first line must be the JSON header; malformed lines raise
    :class:`EventFileParseError` with their 1-based line number, and
    out-of-domain values raise :class:`DataDomainError` naming the record.
    """
    lines = _open_lines(source)
    if not lines:
        raise EventFileParseError("empty file: missing JSON header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise EventFileParseError("invalid JSON header: %s" % exc, 1) from exc
    if not isinstance(header, dict):
        raise EventFileParseError("header must be a JSON object", 1)
    missing = [key for key in ("n", "m", "r", "t") if key not in header]
    if missing:
        raise EventFileParseError(
            "header missing keys: %s" % ", ".join(missing), 1
        )

    def parse_body():
        for lineno, line in enumerate(lines[1:], start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise EventFileParseError(
                    "expected 4 tab-separated fields, got %d" % len(parts),
                    lineno,
                )
            try:
                yield int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3])
            except ValueError as exc:
                raise EventFileParseError(str(exc), lineno) from exc

    return SequenceMatrix.from_records(
        header["n"], header["m"], header["r"], header["t"], parse_body()
    )


def save_events(matrix, dest):
    """Write a SequenceMatrix in the event file format.

    Times are written with 9 fractional digits, so loading and re-saving a
    conforming file reproduces the same event multiset.
    """
    header = json.dumps(
        {"n": matrix.n, "m": matrix.m, "r": matrix.R, "t": matrix.T}
    )
    lines = [header]
    for account, slot, time, mark in matrix.iter_records():
        lines.append(
            "%d\t%d\t%s\t%d" % (account, slot, _TIME_FORMAT % time, mark)
        )
    text = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text)


def load_labels(source, n=None):
    """Read a label sidecar (``account<TAB>cluster`` lines) as an int array.

    Returns labels indexed by account; every account in [0, n) must appear
    exactly once when ``n`` is given.  Cluster labels are 1-based.
    """
    lines = _open_lines(source)
    pairs = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise EventFileParseError(
                "expected 2 tab-separated fields, got %d" % len(parts), lineno
            )
        try:
            account, label = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise EventFileParseError(str(exc), lineno) from exc
        if account in pairs:
            raise EventFileParseError("duplicate account %d" % account, lineno)
        if label < 1:
            raise DataDomainError("cluster labels are 1-based, got %d" % label)
        pairs[account] = label
    if n is None:
        n = len(pairs)
    missing = sorted(set(range(n)) - set(pairs))
    extra = sorted(set(pairs) - set(range(n)))
    if missing or extra:
        raise DataDomainError(
            "label sidecar does not cover accounts 0..%d exactly "
            "(missing %s, unknown %s)" % (n - 1, missing[:5], extra[:5])
        )
    return np.array([pairs[i] for i in range(n)], dtype=np.int64)


def save_labels(labels, dest):
    """Write 1-based cluster labels as ``account<TAB>cluster`` lines."""
    labels = np.asarray(labels, dtype=np.int64)
    text = "".join("%d\t%d\n" % (i, lab) for i, lab in enumerate(labels))
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text)
