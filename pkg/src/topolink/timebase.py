"""UTC calendar bucketing for temporal resolutions.

Time steps are half-open intervals [t, t + delta) aligned to calendar
boundaries in UTC; weeks start on Monday.  Second/hour/day/week steps are
uniform in epoch seconds.  Month steps follow true calendar months, so
their length varies; MONTH's entry in NOMINAL_DELTA is the mean Gregorian
month and is only used as a descriptive header value.
"""

from __future__ import annotations

import math
from datetime import datetime, timezone

from .resolution import TemporalRes

UNIFORM_DELTA = {
    TemporalRes.SECOND: 1,
    TemporalRes.HOUR: 3600,
    TemporalRes.DAY: 86400,
    TemporalRes.WEEK: 604800,
}

NOMINAL_DELTA = dict(UNIFORM_DELTA)
NOMINAL_DELTA[TemporalRes.MONTH] = 2_629_746

# 1970-01-05 was a Monday; week boundaries are anchored there.
_WEEK_ANCHOR = 4 * 86400


def _month_ordinal(epoch: int) -> int:
    dt = datetime.fromtimestamp(epoch, tz=timezone.utc)
    return dt.year * 12 + dt.month - 1


def _month_ordinal_start(ordinal: int) -> int:
    year, month = divmod(ordinal, 12)
    return int(datetime(year, month + 1, 1, tzinfo=timezone.utc).timestamp())


def floor_epoch(epoch: float, unit: TemporalRes) -> int:
    """Largest step boundary <= epoch."""
    e = math.floor(epoch)
    if unit is TemporalRes.MONTH:
        return _month_ordinal_start(_month_ordinal(e))
    if unit is TemporalRes.WEEK:
        return (e - _WEEK_ANCHOR) // 604800 * 604800 + _WEEK_ANCHOR
    d = UNIFORM_DELTA[unit]
    return e // d * d


def step_start(t0: int, unit: TemporalRes, z: int) -> int:
    """Epoch of the start of step *z* on a grid anchored at *t0*."""
    if unit is TemporalRes.MONTH:
        return _month_ordinal_start(_month_ordinal(t0) + z)
    return t0 + z * UNIFORM_DELTA[unit]


def step_index(t0: int, unit: TemporalRes, epoch: float) -> int:
    """Step containing *epoch*; may be negative or >= steps for out-of-range."""
    if unit is TemporalRes.MONTH:
        return _month_ordinal(math.floor(epoch)) - _month_ordinal(t0)
    return (math.floor(epoch) - t0) // UNIFORM_DELTA[unit]


def count_steps(t0: int, unit: TemporalRes, t_end: float) -> int:
    """Number of steps needed to cover [t0, t_end)."""
    if t_end <= t0:
        raise ValueError("empty time range")
    return step_index(t0, unit, t_end - 1) + 1


def month_of_step(t0: int, unit: TemporalRes, z: int) -> int:
    """Calendar month ordinal (year*12 + month-1) of a step's start."""
    return _month_ordinal(step_start(t0, unit, z))


def quarter_of_step(t0: int, unit: TemporalRes, z: int) -> int:
    ordinal = month_of_step(t0, unit, z)
    year, month = divmod(ordinal, 12)
    return year * 4 + month // 3
