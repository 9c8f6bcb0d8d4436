"""Salient/extreme feature thresholds and tree-guided level-set extraction.

Salient thresholds come from an exact 1-D 2-means split of extremum
persistence values, computed per seasonal interval so that behavior normal
for one season can still be a feature in another.  Extreme thresholds are
Tukey box-plot fences over the function values of all salient extrema.
Feature sets are bitsets over graph vertices, extracted by an
output-sensitive traversal seeded at the tree's extrema.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DomainMismatchError
from .mergetree import MergeTree
from .resolution import Resolution, SpatialRes, TemporalRes, parse_spatial, parse_temporal
from .stgraph import Provenance, ScalarFunction, TemporalDomain
from .timebase import month_of_step, quarter_of_step

_MAGIC = b"FSET"
_VERSION = 1


@dataclass(frozen=True)
class Thresholds:
    mode: str          # 'salient' | 'extreme'
    interval: str      # interval label, or 'all' for extreme mode
    theta_plus: float | None
    theta_minus: float | None


@dataclass(frozen=True)
class SeasonalIntervals:
    """Disjoint contiguous spans of time-step indices covering [0, m)."""

    spans: tuple[tuple[int, int], ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        cursor = 0
        for a, b in self.spans:
            if a != cursor or b <= a:
                raise DomainMismatchError("intervals must partition the step range")
            cursor = b

    def __len__(self) -> int:
        return len(self.spans)


def seasonal_intervals(td: TemporalDomain) -> SeasonalIntervals:
    """Monthly intervals for hourly data, quarter-yearly for daily data,
    the whole range otherwise."""
    if td.unit is TemporalRes.HOUR:
        keys = [month_of_step(td.t0, td.unit, z) for z in range(td.steps)]
        fmt = lambda k: f"{k // 12:04d}-{k % 12 + 1:02d}"
    elif td.unit is TemporalRes.DAY:
        keys = [quarter_of_step(td.t0, td.unit, z) for z in range(td.steps)]
        fmt = lambda k: f"{k // 4:04d}-q{k % 4 + 1}"
    else:
        return SeasonalIntervals(spans=((0, td.steps),), labels=("all",))

    spans, labels = [], []
    start = 0
    for z in range(1, td.steps + 1):
        if z == td.steps or keys[z] != keys[start]:
            spans.append((start, z))
            labels.append(fmt(keys[start]))
            start = z
    return SeasonalIntervals(spans=tuple(spans), labels=tuple(labels))


@dataclass(frozen=True)
class ExtremaTable:
    """One extremum per persistence pair of a tree, with its function value,
    persistence (full range for global pairs) and time step."""

    vertices: np.ndarray
    values: np.ndarray
    persistence: np.ndarray
    steps: np.ndarray


def extrema_table(tree: MergeTree, f: ScalarFunction) -> ExtremaTable:
    verts = tree.creators
    return ExtremaTable(
        vertices=verts,
        values=f.values[verts],
        persistence=tree.pair_persistence(f.values),
        steps=verts // f.graph.n_regions,
    )


def two_means_high_mask(persistence: np.ndarray) -> np.ndarray:
    """High-persistence cluster via exact 1-D 2-means.

    Scans every split point of the sorted values for the one minimizing the
    within-cluster sum of squares (linear after sorting, no seeds).  With
    fewer than two values, or all values equal, the single cluster counts
    as high so every extremum stays salient.
    """
    p = np.asarray(persistence, dtype=np.float64)
    n = len(p)
    if n < 2 or np.all(p == p[0]):
        return np.ones(n, dtype=bool)
    order = np.argsort(p, kind="stable")
    s = p[order]
    c1 = np.cumsum(s)
    c2 = np.cumsum(s * s)
    k = np.arange(1, n)
    sse_low = c2[k - 1] - c1[k - 1] ** 2 / k
    sse_high = (c2[-1] - c2[k - 1]) - (c1[-1] - c1[k - 1]) ** 2 / (n - k)
    split = int(np.argmin(sse_low + sse_high)) + 1  # first minimum: largest high cluster
    mask = np.zeros(n, dtype=bool)
    mask[order[split:]] = True
    return mask


def salient_thresholds(maxima: ExtremaTable, minima: ExtremaTable,
                       span: tuple[int, int], interval: str) -> Thresholds:
    """Interval thresholds: theta_plus is the lowest value among salient
    maxima, theta_minus the highest value among salient minima."""
    a, b = span
    theta_plus = theta_minus = None
    sel = (maxima.steps >= a) & (maxima.steps < b)
    if np.any(sel):
        high = two_means_high_mask(maxima.persistence[sel])
        theta_plus = float(np.min(maxima.values[sel][high]))
    sel = (minima.steps >= a) & (minima.steps < b)
    if np.any(sel):
        high = two_means_high_mask(minima.persistence[sel])
        theta_minus = float(np.max(minima.values[sel][high]))
    return Thresholds(mode="salient", interval=interval, theta_plus=theta_plus, theta_minus=theta_minus)


def extreme_threshold(salient_values: np.ndarray, polarity: str) -> float | None:
    """Tukey fence over salient-extremum function values.

    Quartiles use linear interpolation between order statistics.  Needs at
    least four salient extrema of the polarity, else extreme mode is
    disabled for that side.
    """
    vals = np.asarray(salient_values, dtype=np.float64)
    if len(vals) < 4:
        return None
    q1, q3 = np.percentile(vals, [25.0, 75.0], method="linear")
    iqr = q3 - q1
    if polarity == "minima":
        return float(q1 - 1.5 * iqr)
    if polarity == "maxima":
        return float(q3 + 1.5 * iqr)
    raise ValueError(f"unknown polarity {polarity!r}")


def _traverse(tree: MergeTree, f: ScalarFunction, theta: float, *,
              superlevel: bool, inclusive: bool) -> np.ndarray:
    """Level-set extraction by descending (join) or ascending (split) path
    traversal from the qualifying extrema.  Work is proportional to the
    output size plus the extremum prefix scan."""
    values = f.values
    out = np.zeros(tree.n_vertices, dtype=bool)
    if superlevel:
        qualifies = (lambda x: x >= theta) if inclusive else (lambda x: x > theta)
    else:
        qualifies = (lambda x: x <= theta) if inclusive else (lambda x: x < theta)

    stack: list[int] = []
    for c in tree.creators:  # sorted best-first, so the scan can stop early
        c = int(c)
        if not qualifies(values[c]):
            break
        out[c] = True
        stack.append(c)

    indptr = f.graph.indptr
    indices = f.graph.indices
    vals = values
    while stack:
        v = stack.pop()
        fv = vals[v]
        for u in indices[indptr[v]:indptr[v + 1]]:
            u = int(u)
            fu = vals[u]
            if out[u] or not qualifies(fu):
                continue
            if (superlevel and fu <= fv) or (not superlevel and fu >= fv):
                out[u] = True
                stack.append(u)
    return out


def query_superlevel(tree: MergeTree, f: ScalarFunction, theta: float, *,
                     inclusive: bool = True) -> np.ndarray:
    """Vertices with f >= theta (or > theta when not inclusive)."""
    if tree.kind != "join":
        raise DomainMismatchError("super-level queries need a join tree")
    return _traverse(tree, f, theta, superlevel=True, inclusive=inclusive)


def query_sublevel(tree: MergeTree, f: ScalarFunction, theta: float, *,
                   inclusive: bool = True) -> np.ndarray:
    """Vertices with f <= theta (or < theta when not inclusive)."""
    if tree.kind != "split":
        raise DomainMismatchError("sub-level queries need a split tree")
    return _traverse(tree, f, theta, superlevel=False, inclusive=inclusive)


@dataclass
class FeatureSet:
    """Polarity-tagged vertex bitsets for one function, resolution and mode."""

    provenance: Provenance
    mode: str
    n_regions: int
    m_steps: int
    t0: int
    temporal_unit: TemporalRes
    sigma_plus: np.ndarray
    sigma_minus: np.ndarray

    @property
    def resolution(self) -> Resolution:
        return self.provenance.resolution

    @property
    def n_vertices(self) -> int:
        return self.n_regions * self.m_steps

    def grid_plus(self) -> np.ndarray:
        return self.sigma_plus.reshape(self.m_steps, self.n_regions)

    def grid_minus(self) -> np.ndarray:
        return self.sigma_minus.reshape(self.m_steps, self.n_regions)

    def counts(self) -> tuple[int, int]:
        return int(np.count_nonzero(self.sigma_plus)), int(np.count_nonzero(self.sigma_minus))


def _interval_mask(n_regions: int, m_steps: int, span: tuple[int, int]) -> np.ndarray:
    mask = np.zeros((m_steps, n_regions), dtype=bool)
    mask[span[0]:span[1]] = True
    return mask.ravel()


def feature_sets(f: ScalarFunction, jtree: MergeTree, stree: MergeTree,
                 intervals: SeasonalIntervals) -> tuple[dict[str, FeatureSet], list[Thresholds]]:
    """Salient and extreme feature sets plus the thresholds used.

    Salient mode applies each interval's thresholds to that interval's
    vertex slice.  Extreme mode applies global box-plot fences, strictly:
    an extremum sitting exactly on a fence is not an outlier.  The extreme
    entry is omitted when neither polarity has at least four salient
    extrema.
    """
    g = f.graph
    maxima = extrema_table(jtree, f)
    minima = extrema_table(stree, f)

    sig_plus = np.zeros(g.n_vertices, dtype=bool)
    sig_minus = np.zeros(g.n_vertices, dtype=bool)
    thresholds: list[Thresholds] = []
    salient_max_values: list[np.ndarray] = []
    salient_min_values: list[np.ndarray] = []

    for span, label in zip(intervals.spans, intervals.labels):
        th = salient_thresholds(maxima, minima, span, label)
        thresholds.append(th)
        mask = _interval_mask(g.n_regions, g.m_steps, span)
        if th.theta_plus is not None:
            sig_plus |= query_superlevel(jtree, f, th.theta_plus) & mask
            sel = (maxima.steps >= span[0]) & (maxima.steps < span[1])
            salient_max_values.append(maxima.values[sel][two_means_high_mask(maxima.persistence[sel])])
        if th.theta_minus is not None:
            sig_minus |= query_sublevel(stree, f, th.theta_minus) & mask
            sel = (minima.steps >= span[0]) & (minima.steps < span[1])
            salient_min_values.append(minima.values[sel][two_means_high_mask(minima.persistence[sel])])

    def make(mode, plus, minus):
        return FeatureSet(
            provenance=f.provenance, mode=mode,
            n_regions=g.n_regions, m_steps=g.m_steps,
            t0=g.td.t0, temporal_unit=g.td.unit,
            sigma_plus=plus, sigma_minus=minus,
        )

    out = {"salient": make("salient", sig_plus, sig_minus)}

    all_max = np.concatenate(salient_max_values) if salient_max_values else np.empty(0)
    all_min = np.concatenate(salient_min_values) if salient_min_values else np.empty(0)
    fence_plus = extreme_threshold(all_max, "maxima")
    fence_minus = extreme_threshold(all_min, "minima")
    if fence_plus is not None or fence_minus is not None:
        ext_plus = (query_superlevel(jtree, f, fence_plus, inclusive=False)
                    if fence_plus is not None else np.zeros(g.n_vertices, dtype=bool))
        ext_minus = (query_sublevel(stree, f, fence_minus, inclusive=False)
                     if fence_minus is not None else np.zeros(g.n_vertices, dtype=bool))
        thresholds.append(Thresholds(mode="extreme", interval="all",
                                     theta_plus=fence_plus, theta_minus=fence_minus))
        out["extreme"] = make("extreme", ext_plus, ext_minus)
    return out, thresholds


def build_feature_sets(f: ScalarFunction) -> tuple[dict[str, FeatureSet], list[Thresholds]]:
    """Trees, seasonal intervals and feature sets for one function."""
    from .mergetree import join_tree, split_tree

    jtree, _ = join_tree(f.graph, f)
    stree, _ = split_tree(f.graph, f)
    return feature_sets(f, jtree, stree, seasonal_intervals(f.graph.td))


# -- disk format: header + two raw bitsets, 64-bit words, little-endian ----

def _pack_bits(bits: np.ndarray) -> bytes:
    n_words = (len(bits) + 63) // 64
    padded = np.zeros(n_words * 64, dtype=bool)
    padded[:len(bits)] = bits
    return np.packbits(padded, bitorder="little").tobytes()


def _unpack_bits(raw: bytes, n: int) -> np.ndarray:
    return np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[:n].astype(bool)


def _write_str(fh, s: str) -> None:
    data = s.encode("utf-8")
    fh.write(struct.pack("<I", len(data)))
    fh.write(data)


def save_feature_set(fs: FeatureSet, path) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", _MAGIC, _VERSION))
        for s in (fs.provenance.dataset, fs.provenance.name, fs.provenance.kind,
                  fs.provenance.resolution.spatial.value, fs.provenance.resolution.temporal.value,
                  fs.mode):
            _write_str(fh, s)
        fh.write(struct.pack("<qqq", fs.n_regions, fs.m_steps, fs.t0))
        fh.write(_pack_bits(fs.sigma_plus))
        fh.write(_pack_bits(fs.sigma_minus))


def load_feature_set(path) -> FeatureSet:
    with open(path, "rb") as fh:
        magic, version = struct.unpack("<4sI", fh.read(8))
        if magic != _MAGIC or version != _VERSION:
            raise DomainMismatchError(f"not a feature set file: {path}")

        def read_str():
            (n,) = struct.unpack("<I", fh.read(4))
            return fh.read(n).decode("utf-8")

        dataset, name, kind, spatial, temporal, mode = (read_str() for _ in range(6))
        n_regions, m_steps, t0 = struct.unpack("<qqq", fh.read(24))
        resolution = Resolution(parse_spatial(spatial), parse_temporal(temporal))
        n = n_regions * m_steps
        n_bytes = ((n + 63) // 64) * 8
        plus = _unpack_bits(fh.read(n_bytes), n)
        minus = _unpack_bits(fh.read(n_bytes), n)
    return FeatureSet(
        provenance=Provenance(dataset, name, kind, resolution),
        mode=mode, n_regions=n_regions, m_steps=m_steps, t0=t0,
        temporal_unit=resolution.temporal,
        sigma_plus=plus, sigma_minus=minus,
    )
