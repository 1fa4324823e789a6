"""CSV and JSON readers/writers, and reconstruction of tracks from step/turn series."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .decode import ResidualSeries, StateSequence
from .errors import ParseError, StructureError
from .geometry import StepTurnSeries, Track

__all__ = [
    "fmt",
    "read_tracks",
    "write_tracks",
    "read_series",
    "write_series",
    "read_states",
    "write_states",
    "read_residuals",
    "write_residuals",
    "residual_paths",
    "write_json",
    "read_json",
    "integrate_track",
]

MISSING = "NA"


def fmt(v):
    """Deterministic text form of a float (17 significant digits)."""
    v = float(v)
    return MISSING if math.isnan(v) else format(v, ".17g")


def _rows(path, required, optional=()):
    """Yield ``(line_number, record)`` for a headed CSV file."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise StructureError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        allowed = (list(required), list(required) + list(optional))
        if header not in allowed:
            raise ParseError(f"{path}: expected header {','.join(required)}, got {','.join(header)}", line=1)
        for rec in reader:
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"{path}: expected {len(header)} fields, got {len(rec)}", line=reader.line_num)
            yield reader.line_num, dict(zip(header, (c.strip() for c in rec)))


def _float(rec, key, line, path, allow_missing=False):
    text = rec[key]
    if allow_missing and text == MISSING:
        return math.nan
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"{path}: column {key!r} is not numeric: {text!r}", line=line) from None
    if not math.isfinite(v):
        raise ParseError(f"{path}: column {key!r} is not finite: {text!r}", line=line)
    return v


def _group(path, records, key):
    """Group consecutive records by ``key``; a label may not reappear later."""
    groups = {}
    last = None
    for line, rec in records:
        k = rec[key]
        if k != last and k in groups:
            raise ParseError(f"{path}: rows for id {k!r} are not contiguous", line=line)
        groups.setdefault(k, []).append((line, rec))
        last = k
    if not groups:
        raise StructureError(f"{path}: no data rows")
    return groups


def read_tracks(path):
    """Read a ``id,x,y[,t_sec]`` location file into one :class:`Track` per id."""
    groups = _group(path, _rows(path, ("id", "x", "y"), ("t_sec",)), "id")
    tracks = []
    for tid, recs in groups.items():
        xy = np.array([[_float(r, "x", ln, path), _float(r, "y", ln, path)] for ln, r in recs])
        times, rate = None, 1.0
        if "t_sec" in recs[0][1]:
            times = np.array([_float(r, "t_sec", ln, path) for ln, r in recs])
            back = np.flatnonzero(np.diff(times) <= 0)
            if back.size:
                raise ParseError(f"{path}: t_sec not increasing within id {tid!r}", line=recs[back[0] + 1][0])
            if len(times) > 1:
                rate = 1.0 / float(np.median(np.diff(times)))
        tracks.append(Track(tid, xy, rate, times))
    return tracks


def _write(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_tracks(tracks, path):
    with_times = any(t.times is not None for t in tracks)
    header = ["id", "x", "y"] + (["t_sec"] if with_times else [])
    rows = []
    for tr in tracks:
        for i, (x, y) in enumerate(tr.locations):
            row = [tr.id, fmt(x), fmt(y)]
            if with_times:
                row.append(fmt(tr.times[i]) if tr.times is not None else fmt(i / tr.sample_rate_hz))
            rows.append(row)
    _write(path, header, rows)


def _check_index(path, tid, recs):
    for k, (ln, r) in enumerate(recs, start=1):
        try:
            t = int(r["t"])
        except ValueError:
            raise ParseError(f"{path}: t is not an integer: {r['t']!r}", line=ln) from None
        if t != k:
            raise ParseError(f"{path}: id {tid!r} expected t={k}, got {t}", line=ln)


def read_series(path):
    """Read an ``id,t,step,turn`` file into :class:`StepTurnSeries` objects."""
    groups = _group(path, _rows(path, ("id", "t", "step", "turn")), "id")
    out = []
    for tid, recs in groups.items():
        _check_index(path, tid, recs)
        steps = [_float(r, "step", ln, path) for ln, r in recs]
        turns = [_float(r, "turn", ln, path) for ln, r in recs]
        for (ln, _), s, a in zip(recs, steps, turns):
            if not s > 0:
                raise ParseError(f"{path}: step must be positive, got {s}", line=ln)
            if not -math.pi < a <= math.pi:
                raise ParseError(f"{path}: turn outside (-pi, pi]: {a}", line=ln)
        out.append(StepTurnSeries(tid, steps, turns))
    return out


def write_series(series, path):
    rows = []
    for s in series:
        for t, (a, b) in enumerate(zip(s.steps, s.turns), start=1):
            rows.append([s.track_id, t, fmt(a), fmt(b)])
    _write(path, ["id", "t", "step", "turn"], rows)


def _read_values(path, allow_missing):
    groups = _group(path, _rows(path, ("track_id", "t", "value")), "track_id")
    out = {}
    for tid, recs in groups.items():
        _check_index(path, tid, recs)
        out[tid] = np.array([_float(r, "value", ln, path, allow_missing) for ln, r in recs])
    return out


def read_states(path):
    seqs = []
    for tid, v in _read_values(path, False).items():
        if np.any(v != np.round(v)) or np.any(v < 1):
            raise ParseError(f"{path}: states of {tid!r} must be integers >= 1")
        seqs.append(StateSequence(tid, v.astype(np.int64)))
    return seqs


def write_states(seqs, path):
    rows = [[s.track_id, t, int(v)] for s in seqs for t, v in enumerate(s.states, start=1)]
    _write(path, ["track_id", "t", "value"], rows)


def residual_paths(path):
    """Step and turn residual file names derived from one output path."""
    p = Path(path)
    suffix = p.suffix or ".csv"
    return p.with_name(f"{p.stem}_step{suffix}"), p.with_name(f"{p.stem}_turn{suffix}")


def write_residuals(residuals, path):
    """Write step and turn residuals to two CSVs; the prefix is ``NA``."""
    step_path, turn_path = residual_paths(path)
    for target, attr in ((step_path, "r_step"), (turn_path, "r_turn")):
        rows = [[r.track_id, t, fmt(v)] for r in residuals for t, v in enumerate(getattr(r, attr), start=1)]
        _write(target, ["track_id", "t", "value"], rows)
    return step_path, turn_path


def read_residuals(path):
    step_path, turn_path = residual_paths(path)
    steps = _read_values(step_path, True)
    turns = _read_values(turn_path, True)
    if steps.keys() != turns.keys():
        raise StructureError("step and turn residual files cover different tracks")
    nan = lambda v: np.full(len(v), np.nan)  # noqa: E731
    return [ResidualSeries(k, steps[k], turns[k], nan(steps[k]), nan(turns[k])) for k in steps]


def write_json(obj, path):
    data = obj.to_dict() if hasattr(obj, "to_dict") else obj
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON ({e.msg})", line=e.lineno) from None


def integrate_track(series, origin=(0.0, 0.0), initial_heading=0.0, track_id=None):
    """Rebuild planar locations from a step/turn series.

    The track starts with a lead-in point one ``steps[0]`` behind ``origin``
    along ``initial_heading`` (that leg carries no turn, so its length is
    arbitrary), then turns and steps from ``origin`` onwards. Converting
    the result back with :func:`arhmm.geometry.steps_and_turns` recovers
    ``series``.
    """
    steps = np.asarray(series.steps, dtype=float)
    turns = np.asarray(series.turns, dtype=float)
    ox, oy = origin
    headings = initial_heading + np.cumsum(turns)
    xs = ox + np.concatenate([[0.0], np.cumsum(steps * np.cos(headings))])
    ys = oy + np.concatenate([[0.0], np.cumsum(steps * np.sin(headings))])
    lead = steps[0] if steps.size else 1.0
    lead_in = [ox - lead * math.cos(initial_heading), oy - lead * math.sin(initial_heading)]
    loc = np.vstack([lead_in, np.column_stack([xs, ys])])
    return Track(track_id or series.track_id, loc)
