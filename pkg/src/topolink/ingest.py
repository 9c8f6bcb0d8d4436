"""Dataset descriptors, record parsing and aggregation into scalar functions.

A descriptor is a small ``key: value`` document naming the spatial/temporal
columns and their native resolutions, plus optional identifier and numeric
columns.  Records arrive as CSV with a header row.  Aggregation buckets
records into (region, time step) points at a target resolution and produces
density (tuple count), unique (distinct identifier count) or attribute
(mean value) functions.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import DescriptorError, IngestError, ResolutionError
from .resolution import (
    DEFAULT_DAG,
    Resolution,
    ResolutionDag,
    SpatialRes,
    TemporalRes,
    compatible_resolutions,
    parse_spatial,
    parse_temporal,
)
from .stgraph import Provenance, ScalarFunction, SpatialDomain, TemporalDomain, build_graph
from .timebase import UNIFORM_DELTA, count_steps, floor_epoch


@dataclass(frozen=True)
class DatasetDescriptor:
    name: str
    spatial_attr: tuple[str, ...]  # one column, or (lon, lat) for GPS
    spatial_resolution: SpatialRes
    temporal_attr: str
    temporal_resolution: TemporalRes
    id_attrs: tuple[str, ...]
    numeric_attrs: tuple[str, ...]
    time_start: int
    time_end: int

    @property
    def native(self) -> Resolution:
        return Resolution(self.spatial_resolution, self.temporal_resolution)


_REQUIRED_KEYS = ("name", "spatial_attr", "spatial_resolution",
                  "temporal_attr", "temporal_resolution", "time_start", "time_end")


def parse_descriptor(text: str) -> DatasetDescriptor:
    """Parse and validate a descriptor document.

    One ``key: value`` per line; blank lines and full-line ``#`` comments are
    skipped.  ``id_attrs``/``numeric_attrs`` are comma-separated and optional.
    """
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise DescriptorError(f"line {lineno}: expected 'key: value', got {line!r}")
        key, _, value = line.partition(":")
        key = key.strip().lower()
        if key in fields:
            raise DescriptorError(f"line {lineno}: duplicate key {key!r}")
        fields[key] = value.strip()

    missing = [k for k in _REQUIRED_KEYS if k not in fields]
    if missing:
        raise DescriptorError(f"missing keys: {', '.join(missing)}")

    try:
        spatial_res = parse_spatial(fields["spatial_resolution"])
        temporal_res = parse_temporal(fields["temporal_resolution"])
    except ResolutionError as exc:
        raise DescriptorError(str(exc)) from None

    spatial_attr = tuple(fields["spatial_attr"].split())
    if spatial_res is SpatialRes.GPS:
        if len(spatial_attr) != 2:
            raise DescriptorError("gps data needs two spatial columns: 'lon lat'")
    elif len(spatial_attr) != 1:
        raise DescriptorError("non-gps data needs exactly one spatial column")

    def split_list(key):
        value = fields.get(key, "")
        return tuple(part.strip() for part in value.split(",") if part.strip())

    try:
        t_start, t_end = int(fields["time_start"]), int(fields["time_end"])
    except ValueError:
        raise DescriptorError("time_start/time_end must be epoch seconds") from None
    if t_start >= t_end:
        raise DescriptorError("time_start must precede time_end")

    temporal_attr = fields["temporal_attr"]
    if temporal_attr in spatial_attr:
        raise DescriptorError("spatial and temporal columns must differ")

    return DatasetDescriptor(
        name=fields["name"],
        spatial_attr=spatial_attr,
        spatial_resolution=spatial_res,
        temporal_attr=temporal_attr,
        temporal_resolution=temporal_res,
        id_attrs=split_list("id_attrs"),
        numeric_attrs=split_list("numeric_attrs"),
        time_start=t_start,
        time_end=t_end,
    )


def validate_columns(desc: DatasetDescriptor, header: list[str]) -> None:
    cols = set(header)
    declared = list(desc.spatial_attr) + [desc.temporal_attr] + list(desc.id_attrs) + list(desc.numeric_attrs)
    for col in declared:
        if col not in cols:
            raise DescriptorError(f"column {col!r} missing from CSV header")


# -- spatial regions ---------------------------------------------------------

def load_spatial_domain(polygon_path, adjacency_path) -> tuple[SpatialDomain, dict[int, list[tuple[float, float]]]]:
    """Read a polygon file (region id + lon/lat vertex list per line) and an
    adjacency list file (region id pairs)."""
    polygons: dict[int, list[tuple[float, float]]] = {}
    for raw in Path(polygon_path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        rid = int(parts[0])
        coords = [float(p) for p in parts[1:]]
        if len(coords) < 6 or len(coords) % 2:
            raise IngestError(f"region {rid}: a polygon needs at least 3 lon/lat pairs")
        polygons[rid] = list(zip(coords[0::2], coords[1::2]))

    adjacency = []
    for raw in Path(adjacency_path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        a, b = (int(p) for p in line.split())
        adjacency.append((a, b))

    domain = SpatialDomain(regions=tuple(sorted(polygons)), adjacency=tuple(adjacency))
    return domain, polygons


def point_in_polygon(lon: float, lat: float, poly: list[tuple[float, float]]) -> bool:
    """Ray casting with boundary points counted as inside."""
    n = len(poly)
    inside = False
    for i in range(n):
        x1, y1 = poly[i - 1]
        x2, y2 = poly[i]
        if (x1, y1) == (lon, lat):
            return True
        if (y1 > lat) != (y2 > lat):
            t = (lat - y1) / (y2 - y1)
            xcross = x1 + t * (x2 - x1)
            if math.isclose(xcross, lon, rel_tol=0.0, abs_tol=1e-12):
                return True
            if lon < xcross:
                inside = not inside
        elif y1 == y2 == lat and min(x1, x2) <= lon <= max(x1, x2):
            return True
    return inside


def assign_region(lon: float, lat: float, polygons: dict[int, list]) -> int | None:
    """First containing region in ascending id order, so boundary ties go to
    the lowest region id."""
    for rid in sorted(polygons):
        if point_in_polygon(lon, lat, polygons[rid]):
            return rid
    return None


# -- record parsing ----------------------------------------------------------

@dataclass
class SkipReport:
    total: int = 0
    bad_spatial: int = 0
    bad_temporal: int = 0
    out_of_range: int = 0

    @property
    def kept(self) -> int:
        return self.total - self.bad_spatial - self.bad_temporal - self.out_of_range


@dataclass
class ParsedRecords:
    """Columnar view of one dataset's records, with per-row epoch seconds and
    either lon/lat pairs (GPS) or native region ids."""

    descriptor: DatasetDescriptor
    epochs: np.ndarray
    lonlat: np.ndarray | None          # (n, 2) for GPS natives
    native_regions: np.ndarray | None  # region ids for non-GPS natives
    ids: dict[str, list[str]]
    numerics: dict[str, np.ndarray]
    skips: SkipReport

    def __len__(self) -> int:
        return len(self.epochs)


def _parse_epoch(text: str) -> float | None:
    text = text.strip()
    if not text:
        return None
    try:
        return float(text)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        return None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def parse_csv(path, desc: DatasetDescriptor) -> ParsedRecords:
    """Load records, dropping rows whose spatial or temporal value cannot be
    parsed or that fall outside the descriptor's time range.  Unparsable
    numeric cells become NaN but keep their row."""
    skips = SkipReport()
    epochs: list[float] = []
    lonlat: list[tuple[float, float]] = []
    regions: list[int] = []
    ids: dict[str, list[str]] = {col: [] for col in desc.id_attrs}
    numerics: dict[str, list[float]] = {col: [] for col in desc.numeric_attrs}
    is_gps = desc.spatial_resolution is SpatialRes.GPS

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestError(f"{path}: empty CSV")
        validate_columns(desc, list(reader.fieldnames))
        for row in reader:
            skips.total += 1
            epoch = _parse_epoch(row.get(desc.temporal_attr) or "")
            if epoch is None:
                skips.bad_temporal += 1
                continue
            if not desc.time_start <= epoch < desc.time_end:
                skips.out_of_range += 1
                continue
            if is_gps:
                try:
                    lon = float(row[desc.spatial_attr[0]])
                    lat = float(row[desc.spatial_attr[1]])
                except (TypeError, ValueError):
                    skips.bad_spatial += 1
                    continue
                lonlat.append((lon, lat))
            else:
                try:
                    regions.append(int(row[desc.spatial_attr[0]]))
                except (TypeError, ValueError):
                    skips.bad_spatial += 1
                    continue
            epochs.append(epoch)
            for col in desc.id_attrs:
                ids[col].append(row.get(col) or "")
            for col in desc.numeric_attrs:
                try:
                    numerics[col].append(float(row[col]))
                except (TypeError, ValueError, KeyError):
                    numerics[col].append(math.nan)

    return ParsedRecords(
        descriptor=desc,
        epochs=np.array(epochs, dtype=np.float64),
        lonlat=np.array(lonlat, dtype=np.float64) if is_gps else None,
        native_regions=None if is_gps else np.array(regions, dtype=np.int64),
        ids=ids,
        numerics={col: np.array(vals, dtype=np.float64) for col, vals in numerics.items()},
        skips=skips,
    )


# -- aggregation -------------------------------------------------------------

@dataclass(frozen=True)
class FunctionKind:
    kind: str               # 'density' | 'unique' | 'attribute'
    column: str | None = None

    def __post_init__(self):
        if self.kind not in ("density", "unique", "attribute"):
            raise IngestError(f"unknown function kind {self.kind!r}")
        if self.kind != "density" and not self.column:
            raise IngestError(f"{self.kind} functions need a column")

    @property
    def name(self) -> str:
        if self.kind == "density":
            return "density"
        prefix = "unique" if self.kind == "unique" else "mean"
        return f"{prefix}_{self.column}"


def function_kinds(desc: DatasetDescriptor) -> list[FunctionKind]:
    kinds = [FunctionKind("density")]
    kinds += [FunctionKind("unique", col) for col in desc.id_attrs]
    kinds += [FunctionKind("attribute", col) for col in desc.numeric_attrs]
    return kinds


def region_assignment(records: ParsedRecords, spatial: SpatialRes,
                      domain: SpatialDomain, polygons: dict | None = None) -> tuple[np.ndarray, int]:
    """Region index per record at the target spatial resolution; -1 when a
    record cannot be placed.  Returns the miss count alongside."""
    desc = records.descriptor
    n = len(records)
    if spatial is SpatialRes.CITY:
        return np.zeros(n, dtype=np.int64), 0
    if desc.spatial_resolution is SpatialRes.GPS:
        if polygons is None:
            raise IngestError(f"gps assignment to {spatial} needs region polygons")
        out = np.full(n, -1, dtype=np.int64)
        index = domain.region_index
        for i, (lon, lat) in enumerate(records.lonlat):
            rid = assign_region(lon, lat, polygons)
            if rid is not None:
                out[i] = index[rid]
        return out, int(np.count_nonzero(out < 0))
    if desc.spatial_resolution is not spatial:
        raise IngestError(f"cannot recut {desc.spatial_resolution} records into {spatial}")
    index = domain.region_index
    out = np.array([index.get(int(r), -1) for r in records.native_regions], dtype=np.int64)
    return out, int(np.count_nonzero(out < 0))


def temporal_domain_for(desc: DatasetDescriptor, temporal: TemporalRes) -> TemporalDomain:
    t0 = floor_epoch(desc.time_start, temporal)
    steps = count_steps(t0, temporal, desc.time_end)
    return TemporalDomain(t0=t0, unit=temporal, steps=steps)


def _bucket_steps(epochs: np.ndarray, td: TemporalDomain) -> np.ndarray:
    if td.unit is TemporalRes.MONTH:
        return np.array([td.step_index(e) for e in epochs], dtype=np.int64)
    delta = UNIFORM_DELTA[td.unit]
    return (np.floor(epochs).astype(np.int64) - td.t0) // delta


def aggregate(records: ParsedRecords, desc: DatasetDescriptor, res: Resolution,
              kind: FunctionKind, domain: SpatialDomain,
              polygons: dict | None = None,
              dag: ResolutionDag = DEFAULT_DAG) -> ScalarFunction:
    """Bucket records into (region, step) points and reduce per *kind*.

    Empty points get 0 for density/unique and NaN (no data) for attribute
    functions; the graph drops those vertices.
    """
    if res not in compatible_resolutions(desc.native, dag):
        raise ResolutionError(f"{res.label} is not reachable from {desc.native.label}")

    td = temporal_domain_for(desc, res.temporal)
    n, m = domain.n_regions, td.steps
    region_idx, _ = region_assignment(records, res.spatial, domain, polygons)
    step_idx = _bucket_steps(records.epochs, td)
    valid = (region_idx >= 0) & (step_idx >= 0) & (step_idx < m)
    if not np.any(valid):
        raise IngestError(f"{desc.name}: every record was skipped at {res.label}")

    points = region_idx[valid] + step_idx[valid] * n
    nv = n * m
    counts = None

    if kind.kind == "density":
        values = np.bincount(points, minlength=nv).astype(np.float64)
    elif kind.kind == "unique":
        labels = np.array(records.ids[kind.column], dtype=object)[valid]
        _, codes = np.unique(labels, return_inverse=True)
        pairs = np.unique(points * np.int64(len(labels) + 1) + codes)
        values = np.bincount(pairs // np.int64(len(labels) + 1), minlength=nv).astype(np.float64)
    else:
        raw = records.numerics[kind.column][valid]
        ok = np.isfinite(raw)
        sums = np.bincount(points[ok], weights=raw[ok], minlength=nv)
        counts = np.bincount(points[ok], minlength=nv).astype(np.int64)
        with np.errstate(invalid="ignore"):
            values = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    active = np.isfinite(values)
    graph = build_graph(domain, td, active)
    prov = Provenance(dataset=desc.name, name=kind.name, kind=kind.kind, resolution=res)
    return ScalarFunction(graph=graph, values=values, provenance=prov, counts=counts)


def downscale(f: ScalarFunction, target: Resolution, target_domain: SpatialDomain | None = None,
              dag: ResolutionDag = DEFAULT_DAG) -> ScalarFunction:
    """Re-aggregate a function to a coarser resolution.

    Count functions merge by sum, attribute functions by count-weighted
    mean; no-data points contribute nothing.  Distinct counts are not
    additive, so a summed unique function is only an upper bound; the build
    pipeline recomputes unique functions from records instead.
    """
    src = f.provenance.resolution
    if not dag.reaches(src, target):
        raise ResolutionError(f"{target.label} not reachable from {src.label}")

    if target.spatial is src.spatial:
        domain = f.graph.sd
    elif target.spatial is SpatialRes.CITY:
        domain = SpatialDomain.city()
    else:
        if target_domain is None:
            raise ResolutionError(f"need a region domain to downscale into {target.spatial}")
        domain = target_domain
    if domain.n_regions != 1 and target.spatial is not src.spatial:
        raise ResolutionError("spatial downscale is only defined onto the city domain")

    src_td = f.graph.td
    t0 = floor_epoch(src_td.t0, target.temporal)
    steps = count_steps(t0, target.temporal, src_td.end)
    td = TemporalDomain(t0=t0, unit=target.temporal, steps=steps)

    step_map = np.array([td.step_index(src_td.step_start(z)) for z in range(src_td.steps)],
                        dtype=np.int64)
    region_map = (np.zeros(f.graph.n_regions, dtype=np.int64)
                  if domain.n_regions == 1 else np.arange(f.graph.n_regions, dtype=np.int64))

    src_points = np.arange(f.graph.n_vertices, dtype=np.int64)
    tgt_points = region_map[src_points % f.graph.n_regions] + step_map[src_points // f.graph.n_regions] * domain.n_regions
    nv = domain.n_regions * td.steps

    counts = None
    if f.provenance.kind in ("density", "unique"):
        vals = np.where(f.graph.active, f.values, 0.0)
        values = np.bincount(tgt_points, weights=vals, minlength=nv)
    else:
        w = f.counts if f.counts is not None else f.graph.active.astype(np.int64)
        vals = np.where(f.graph.active, f.values, 0.0)
        sums = np.bincount(tgt_points, weights=vals * w, minlength=nv)
        counts = np.bincount(tgt_points, weights=w, minlength=nv).astype(np.int64)
        with np.errstate(invalid="ignore"):
            values = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    active = np.isfinite(values)
    graph = build_graph(domain, td, active)
    prov = Provenance(dataset=f.provenance.dataset, name=f.provenance.name,
                      kind=f.provenance.kind, resolution=target)
    return ScalarFunction(graph=graph, values=values, provenance=prov, counts=counts)


# -- scalar function disk format ----------------------------------------------
# Header (dataset, attribute, kind, resolution, n regions, t0, delta, steps)
# followed by the value array written row-major as (n_regions, m_steps) and an
# optional tuple-count array for attribute functions.  Little-endian 64-bit.

_FUNC_MAGIC = b"STFN"
_FUNC_VERSION = 1


def _write_str(fh, s: str) -> None:
    data = s.encode("utf-8")
    fh.write(struct.pack("<I", len(data)))
    fh.write(data)


def _read_str(fh) -> str:
    (n,) = struct.unpack("<I", fh.read(4))
    return fh.read(n).decode("utf-8")


def save_function(f: ScalarFunction, path) -> None:
    g = f.graph
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", _FUNC_MAGIC, _FUNC_VERSION))
        prov = f.provenance
        for s in (prov.dataset, prov.name, prov.kind,
                  prov.resolution.spatial.value, prov.resolution.temporal.value):
            _write_str(fh, s)
        fh.write(struct.pack("<qqqqB", g.n_regions, g.td.t0, g.td.delta, g.m_steps,
                             1 if f.counts is not None else 0))
        grid = f.values.reshape(g.m_steps, g.n_regions).T
        fh.write(np.ascontiguousarray(grid, dtype="<f8").tobytes())
        if f.counts is not None:
            cgrid = f.counts.reshape(g.m_steps, g.n_regions).T
            fh.write(np.ascontiguousarray(cgrid, dtype="<u8").tobytes())


def load_function(path, domain: SpatialDomain) -> ScalarFunction:
    with open(path, "rb") as fh:
        magic, version = struct.unpack("<4sI", fh.read(8))
        if magic != _FUNC_MAGIC or version != _FUNC_VERSION:
            raise IngestError(f"not a scalar function file: {path}")
        dataset, name, kind, spatial, temporal = (_read_str(fh) for _ in range(5))
        n, t0, _delta, m, has_counts = struct.unpack("<qqqqB", fh.read(33))
        if n != domain.n_regions:
            raise IngestError(f"{path}: expects {n} regions, domain has {domain.n_regions}")
        res = Resolution(parse_spatial(spatial), parse_temporal(temporal))
        values = np.frombuffer(fh.read(n * m * 8), dtype="<f8").reshape(n, m).T.reshape(-1)
        counts = None
        if has_counts:
            counts = np.frombuffer(fh.read(n * m * 8), dtype="<u8").reshape(n, m).T.reshape(-1).astype(np.int64)
    td = TemporalDomain(t0=t0, unit=res.temporal, steps=m)
    graph = build_graph(domain, td, np.isfinite(values))
    prov = Provenance(dataset=dataset, name=name, kind=kind, resolution=res)
    return ScalarFunction(graph=graph, values=values.copy(), provenance=prov, counts=counts)
