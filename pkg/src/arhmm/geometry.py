"""Planar tracks to step-length / turning-angle series."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, StructureError

__all__ = [
    "Track",
    "StepTurnSeries",
    "wrap_angle",
    "raw_steps_and_turns",
    "steps_and_turns",
    "downsample",
]


def wrap_angle(x):
    """Wrap angles into (-pi, pi]."""
    x = np.asarray(x, dtype=float)
    w = np.mod(x + np.pi, 2.0 * np.pi) - np.pi
    # mod maps pi to -pi; the support is closed on the right
    w = np.where(w <= -np.pi, w + 2.0 * np.pi, w)
    return w if w.ndim else float(w)


@dataclass
class Track:
    """Ordered planar locations of one animal.

    Parameters
    ----------
    id : str
        Track label.
    locations : ndarray, shape (n, 2)
        (x, y) coordinates in arbitrary planar units.
    sample_rate_hz : float
        Sampling rate; metadata only.
    times : ndarray or None
        Optional time stamps in seconds.
    """

    id: str
    locations: np.ndarray
    sample_rate_hz: float = 1.0
    times: np.ndarray | None = None

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float)
        if loc.ndim != 2 or loc.shape[1] != 2:
            raise StructureError(f"track {self.id!r}: locations must have shape (n, 2), got {loc.shape}")
        self.locations = loc
        if self.sample_rate_hz <= 0:
            raise StructureError(f"track {self.id!r}: sample_rate_hz must be positive")
        if self.times is not None:
            self.times = np.asarray(self.times, dtype=float)
            if self.times.shape != (len(loc),):
                raise StructureError(f"track {self.id!r}: times length does not match locations")

    def __len__(self):
        return len(self.locations)


@dataclass
class StepTurnSeries:
    """Aligned bivariate series of step lengths and turning angles."""

    track_id: str
    steps: np.ndarray
    turns: np.ndarray
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        self.steps = np.ascontiguousarray(self.steps, dtype=float)
        self.turns = np.ascontiguousarray(self.turns, dtype=float)
        if self.steps.ndim != 1 or self.steps.shape != self.turns.shape:
            raise StructureError(
                f"series {self.track_id!r}: steps and turns must be 1-d and aligned "
                f"({self.steps.shape} vs {self.turns.shape})"
            )
        if self.validate:
            bad = np.flatnonzero(~(self.steps > 0) | ~np.isfinite(self.steps))
            if bad.size:
                raise DomainError(f"series {self.track_id!r}: non-positive step at index {bad[0]}")
            bad = np.flatnonzero(~((self.turns > -np.pi) & (self.turns <= np.pi)))
            if bad.size:
                raise DomainError(f"series {self.track_id!r}: turn outside (-pi, pi] at index {bad[0]}")

    def __len__(self):
        return len(self.steps)

    @property
    def T(self):
        return len(self.steps)


def raw_steps_and_turns(locations):
    """Unaligned step lengths (n - 1) and turning angles (n - 2)."""
    loc = np.asarray(locations, dtype=float)
    d = np.diff(loc, axis=0)
    steps = np.hypot(d[:, 0], d[:, 1])
    headings = np.arctan2(d[:, 1], d[:, 0])
    turns = wrap_angle(np.diff(headings))
    return steps, np.atleast_1d(turns)


def steps_and_turns(track, zero_floor=0.0):
    """Convert a track into an aligned :class:`StepTurnSeries`.

    The t-th pair is the step from location t+1 to t+2 together with the
    turn made at location t+1, so ``n`` locations give ``n - 2`` pairs. The
    first raw step has no preceding turn and is dropped.

    Turns are counter-clockwise positive.

    Parameters
    ----------
    track : Track
    zero_floor : float
        If positive, steps shorter than this are raised to it. If zero, any
        zero-length step is an error.
    """
    if len(track) < 3:
        raise StructureError(f"track {track.id!r}: need at least 3 locations, got {len(track)}")
    if zero_floor < 0:
        raise DomainError("zero_floor must be non-negative")
    steps, turns = raw_steps_and_turns(track.locations)
    if zero_floor > 0:
        steps = np.maximum(steps, zero_floor)
    else:
        zero = np.flatnonzero(steps <= 0)
        if zero.size:
            i = int(zero[0])
            raise DomainError(
                f"track {track.id!r}: zero-length step at index {i} "
                f"(locations {i} and {i + 1} coincide); set zero_floor > 0"
            )
    return StepTurnSeries(track.id, steps[1:], turns)


def downsample(track, factor):
    """Keep every ``factor``-th location, starting from the first."""
    if int(factor) != factor or factor < 1:
        raise ValueError(f"downsampling factor must be a positive integer, got {factor!r}")
    factor = int(factor)
    times = None if track.times is None else track.times[::factor]
    return Track(track.id, track.locations[::factor].copy(), track.sample_rate_hz / factor, times)
