"""Resolution vocabulary and the spatial/temporal aggregation lattice.

Datasets arrive at a native (spatial, temporal) resolution and can only be
aggregated "downward": a record stream at GPS/second granularity can be
bucketed into zip-code/hour cells, but neighborhood data can never be
re-cut into zip codes.  The lattice of legal conversions is a pair of
small DAGs, one per axis.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import ResolutionError


class SpatialRes(enum.Enum):
    GPS = "gps"
    ZIP = "zip"
    NEIGHBORHOOD = "neighborhood"
    CITY = "city"

    def __str__(self) -> str:
        return self.value


class TemporalRes(enum.Enum):
    SECOND = "second"
    HOUR = "hour"
    DAY = "day"
    WEEK = "week"
    MONTH = "month"

    def __str__(self) -> str:
        return self.value


# Enum declaration order doubles as the fineness rank (lower = finer).
SPATIAL_RANK = {r: i for i, r in enumerate(SpatialRes)}
TEMPORAL_RANK = {r: i for i, r in enumerate(TemporalRes)}


def parse_spatial(text: str) -> SpatialRes:
    try:
        return SpatialRes(text.strip().lower())
    except ValueError:
        raise ResolutionError(f"unknown spatial resolution {text!r}") from None


def parse_temporal(text: str) -> TemporalRes:
    try:
        return TemporalRes(text.strip().lower())
    except ValueError:
        raise ResolutionError(f"unknown temporal resolution {text!r}") from None


@dataclass(frozen=True)
class Resolution:
    spatial: SpatialRes
    temporal: TemporalRes

    @property
    def label(self) -> str:
        return f"{self.spatial.value}/{self.temporal.value}"

    @property
    def rank(self) -> tuple[int, int]:
        """Sort key: finest resolutions first."""
        return (SPATIAL_RANK[self.spatial], TEMPORAL_RANK[self.temporal])

    @classmethod
    def parse(cls, text: str) -> "Resolution":
        parts = text.split("/")
        if len(parts) != 2:
            raise ResolutionError(f"expected 'spatial/temporal', got {text!r}")
        return cls(parse_spatial(parts[0]), parse_temporal(parts[1]))

    def __str__(self) -> str:
        return self.label


def _closure(edges, node):
    reached = {node}
    frontier = [node]
    while frontier:
        cur = frontier.pop()
        for a, b in edges:
            if a is cur and b not in reached:
                reached.add(b)
                frontier.append(b)
    return reached


@dataclass(frozen=True)
class ResolutionDag:
    """Directed edges run from a higher (finer) resolution to a compatible
    lower one.  Reachability, not edge presence, defines convertibility."""

    spatial_edges: frozenset
    temporal_edges: frozenset

    def __post_init__(self):
        for edges, rank in ((self.spatial_edges, SPATIAL_RANK), (self.temporal_edges, TEMPORAL_RANK)):
            for a, b in edges:
                # Edges must strictly coarsen; this also guarantees acyclicity.
                if rank[a] >= rank[b]:
                    raise ResolutionError(f"edge {a} -> {b} does not coarsen")

    def reachable_spatial(self, s: SpatialRes) -> list[SpatialRes]:
        return sorted(_closure(self.spatial_edges, s), key=SPATIAL_RANK.get)

    def reachable_temporal(self, t: TemporalRes) -> list[TemporalRes]:
        return sorted(_closure(self.temporal_edges, t), key=TEMPORAL_RANK.get)

    def reaches(self, src: Resolution, dst: Resolution) -> bool:
        return dst.spatial in _closure(self.spatial_edges, src.spatial) and dst.temporal in _closure(
            self.temporal_edges, src.temporal
        )

    @staticmethod
    def default() -> "ResolutionDag":
        return DEFAULT_DAG


DEFAULT_DAG = ResolutionDag(
    spatial_edges=frozenset(
        {
            (SpatialRes.GPS, SpatialRes.ZIP),
            (SpatialRes.GPS, SpatialRes.NEIGHBORHOOD),
            # Zip and neighborhood polygons overlap arbitrarily, so neither
            # converts into the other; both collapse onto the city.
            (SpatialRes.ZIP, SpatialRes.CITY),
            (SpatialRes.NEIGHBORHOOD, SpatialRes.CITY),
        }
    ),
    temporal_edges=frozenset(
        {
            (TemporalRes.SECOND, TemporalRes.HOUR),
            (TemporalRes.HOUR, TemporalRes.DAY),
            # Weeks straddle month boundaries, so week and month are mutually
            # unreachable; both are reachable from day.
            (TemporalRes.DAY, TemporalRes.WEEK),
            (TemporalRes.DAY, TemporalRes.MONTH),
        }
    ),
)


def compatible_resolutions(native: Resolution, dag: ResolutionDag = DEFAULT_DAG) -> list[Resolution]:
    """Every evaluation resolution reachable from *native*, spatial-major.

    GPS and second are pure data resolutions: they appear as aggregation
    sources but never as evaluation targets.
    """
    spatial = [s for s in dag.reachable_spatial(native.spatial) if s is not SpatialRes.GPS]
    temporal = [t for t in dag.reachable_temporal(native.temporal) if t is not TemporalRes.SECOND]
    return [Resolution(s, t) for s in spatial for t in temporal]
