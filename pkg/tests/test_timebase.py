from datetime import datetime, timezone

from topolink.resolution import TemporalRes
from topolink.timebase import count_steps, floor_epoch, month_of_step, quarter_of_step, step_index, step_start


def epoch(*args):
    return int(datetime(*args, tzinfo=timezone.utc).timestamp())


def test_hour_and_day_floor():
    e = epoch(2013, 3, 5, 14, 37, 22)
    assert floor_epoch(e, TemporalRes.HOUR) == epoch(2013, 3, 5, 14)
    assert floor_epoch(e, TemporalRes.DAY) == epoch(2013, 3, 5)


def test_weeks_start_monday_utc():
    # 2013-03-05 was a Tuesday; the containing week starts Monday 03-04.
    e = epoch(2013, 3, 5, 14)
    assert floor_epoch(e, TemporalRes.WEEK) == epoch(2013, 3, 4)
    assert datetime.fromtimestamp(floor_epoch(e, TemporalRes.WEEK), tz=timezone.utc).weekday() == 0


def test_month_boundaries_are_calendar_true():
    e = epoch(2012, 2, 29, 23, 59, 59)
    t0 = floor_epoch(e, TemporalRes.MONTH)
    assert t0 == epoch(2012, 2, 1)
    assert step_start(t0, TemporalRes.MONTH, 1) == epoch(2012, 3, 1)
    assert step_start(t0, TemporalRes.MONTH, 11) == epoch(2013, 1, 1)
    assert step_index(t0, TemporalRes.MONTH, epoch(2012, 3, 1)) == 1
    assert step_index(t0, TemporalRes.MONTH, epoch(2012, 2, 29)) == 0


def test_half_open_bucketing():
    t0 = epoch(2013, 1, 1)
    assert step_index(t0, TemporalRes.HOUR, t0) == 0
    assert step_index(t0, TemporalRes.HOUR, t0 + 3599) == 0
    assert step_index(t0, TemporalRes.HOUR, t0 + 3600) == 1


def test_count_steps_covers_range():
    t0 = epoch(2013, 1, 1)
    assert count_steps(t0, TemporalRes.DAY, epoch(2013, 1, 8)) == 7
    assert count_steps(t0, TemporalRes.DAY, epoch(2013, 1, 8) - 1) == 7
    assert count_steps(t0, TemporalRes.MONTH, epoch(2014, 1, 1)) == 12


def test_seasonal_key_helpers():
    t0 = epoch(2013, 1, 1)
    assert month_of_step(t0, TemporalRes.HOUR, 0) == month_of_step(t0, TemporalRes.HOUR, 743)
    assert month_of_step(t0, TemporalRes.HOUR, 744) == month_of_step(t0, TemporalRes.HOUR, 0) + 1
    assert quarter_of_step(t0, TemporalRes.DAY, 0) == quarter_of_step(t0, TemporalRes.DAY, 89)
    assert quarter_of_step(t0, TemporalRes.DAY, 90) == quarter_of_step(t0, TemporalRes.DAY, 0) + 1
