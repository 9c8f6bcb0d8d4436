import pytest

from topolink.errors import ResolutionError
from topolink.resolution import (
    DEFAULT_DAG,
    Resolution,
    ResolutionDag,
    SpatialRes,
    TemporalRes,
    compatible_resolutions,
    parse_temporal,
)


def res(s, t):
    return Resolution(SpatialRes(s), TemporalRes(t))


def test_gps_second_yields_twelve_resolutions():
    out = compatible_resolutions(res("gps", "second"))
    assert len(out) == 12
    spatials = {r.spatial for r in out}
    temporals = {r.temporal for r in out}
    assert spatials == {SpatialRes.ZIP, SpatialRes.NEIGHBORHOOD, SpatialRes.CITY}
    assert temporals == {TemporalRes.HOUR, TemporalRes.DAY, TemporalRes.WEEK, TemporalRes.MONTH}


def test_city_week_is_terminal_except_itself():
    assert compatible_resolutions(res("city", "week")) == [res("city", "week")]


def test_city_month_is_the_sink():
    assert compatible_resolutions(res("city", "month")) == [res("city", "month")]


def test_week_and_month_mutually_unreachable():
    assert not DEFAULT_DAG.reaches(res("city", "week"), res("city", "month"))
    assert not DEFAULT_DAG.reaches(res("city", "month"), res("city", "week"))


def test_zip_and_neighborhood_mutually_unreachable():
    assert not DEFAULT_DAG.reaches(res("zip", "day"), res("neighborhood", "day"))
    assert not DEFAULT_DAG.reaches(res("neighborhood", "day"), res("zip", "day"))
    assert DEFAULT_DAG.reaches(res("zip", "day"), res("city", "day"))
    assert DEFAULT_DAG.reaches(res("neighborhood", "day"), res("city", "day"))


def test_no_gps_or_second_evaluation_targets():
    for native in ("gps", "zip", "neighborhood", "city"):
        for nat_t in ("second", "hour", "day", "week", "month"):
            out = compatible_resolutions(res(native, nat_t))
            assert all(r.spatial is not SpatialRes.GPS for r in out)
            assert all(r.temporal is not TemporalRes.SECOND for r in out)


def test_spatial_major_deterministic_order():
    out = compatible_resolutions(res("gps", "second"))
    labels = [r.label for r in out]
    assert labels == sorted(labels, key=lambda _: 0) == labels  # stable
    assert labels[0] == "zip/hour"
    assert labels[-1] == "city/month"
    # Spatial-major: all zip entries precede all neighborhood entries.
    assert labels.index("neighborhood/hour") > labels.index("zip/month")


def test_unknown_resolution_rejected():
    with pytest.raises(ResolutionError):
        parse_temporal("fortnight")


def test_dag_edges_must_coarsen():
    with pytest.raises(ResolutionError):
        ResolutionDag(
            spatial_edges=frozenset({(SpatialRes.CITY, SpatialRes.ZIP)}),
            temporal_edges=frozenset(),
        )
