"""Synthetic signal and corpus generators for experiments and tests.

Everything here is seeded and deterministic; the experiment scripts and the
acceptance suite build their inputs from these generators.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .resolution import Resolution, SpatialRes, TemporalRes
from .stgraph import Provenance, ScalarFunction, SpatialDomain, TemporalDomain, build_graph


def city_function(values: np.ndarray, *, unit: TemporalRes = TemporalRes.HOUR,
                  t0: int = 0, dataset: str = "synthetic", name: str = "signal",
                  kind: str = "attribute") -> ScalarFunction:
    """Wrap a 1-D series as a city-resolution scalar function."""
    values = np.asarray(values, dtype=np.float64)
    td = TemporalDomain(t0=t0, unit=unit, steps=len(values))
    g = build_graph(SpatialDomain.city(), td, np.isfinite(values))
    prov = Provenance(dataset=dataset, name=name, kind=kind,
                      resolution=Resolution(SpatialRes.CITY, unit))
    return ScalarFunction(graph=g, values=values, provenance=prov)


def grid_domain(nx: int, ny: int) -> SpatialDomain:
    """nx * ny grid of regions with 4-neighborhood adjacency (planar)."""
    regions = tuple(range(nx * ny))
    adjacency = []
    for y in range(ny):
        for x in range(nx):
            r = y * nx + x
            if x + 1 < nx:
                adjacency.append((r, r + 1))
            if y + 1 < ny:
                adjacency.append((r, r + nx))
    return SpatialDomain(regions=regions, adjacency=tuple(adjacency))


def bump_train(m: int, rng: np.random.Generator, *, n_pos: int = 50, n_neg: int = 0,
               n_spikes: int = 12, amp: tuple[float, float] = (8.0, 14.0),
               width: tuple[int, int] = (2, 5), noise: float = 0.15) -> np.ndarray:
    """Aperiodic series of strong bumps over small background noise.

    Bump persistence dwarfs the noise persistence, so the salient positive
    features are the bump tops and the salient negative features the ground
    between them.  Irregular placement means no circular shift realigns the
    pattern, and the single-step spikes guarantee that even a one-step shift
    drops some peak onto ground.
    """
    values = rng.normal(0.0, noise, size=m)
    for sign, count in ((1.0, n_pos), (-1.0, n_neg)):
        centers = rng.choice(m, size=count, replace=False)
        for c in centers:
            w = int(rng.integers(width[0], width[1] + 1))
            a = rng.uniform(*amp)
            span = np.arange(max(0, c - w), min(m, c + w + 1))
            profile = a * np.exp(-0.5 * ((span - c) / max(w / 2.0, 1.0)) ** 2)
            values[span] += sign * profile
    if n_spikes:
        spikes = rng.choice(m, size=n_spikes, replace=False)
        values[spikes] += rng.uniform(*amp, size=n_spikes)
    return values


def daily_periodic(days: int, rng: np.random.Generator, *, n_anomalies: int = 5,
                   anomaly_depth: float = 30.0, anomaly_width: int = 30,
                   base_amp: float = 10.0, noise: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Hourly series with a daily cycle and a handful of deep anomalies.

    Returns (values, anomaly_hours).  The anomalies model severe events:
    wide, deep drops that dominate the persistence distribution.
    """
    m = days * 24
    hours = np.arange(m)
    values = base_amp * np.sin(2 * np.pi * hours / 24.0)
    values += 0.3 * base_amp * np.sin(2 * np.pi * hours / (24.0 * 7))
    values += rng.normal(0.0, noise, size=m)
    anchors = rng.choice(np.arange(48, m - 48), size=n_anomalies, replace=False)
    for c in anchors:
        span = np.arange(c - anomaly_width // 2, c + anomaly_width // 2 + 1)
        profile = anomaly_depth * np.exp(-0.5 * ((span - c) / (anomaly_width / 4.0)) ** 2)
        values[span] -= profile
    return values, np.sort(anchors)


def random_feature_grid(n_regions: int, m_steps: int, density: float,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Independent random positive/negative bitsets (disjoint) at the given
    total density, split evenly between polarities."""
    nv = n_regions * m_steps
    n_total = int(round(density * nv))
    chosen = rng.choice(nv, size=n_total, replace=False)
    plus = np.zeros(nv, dtype=bool)
    minus = np.zeros(nv, dtype=bool)
    half = n_total // 2
    plus[chosen[:half]] = True
    minus[chosen[half:]] = True
    return plus, minus


# -- corpus generation --------------------------------------------------------

def write_hourly_counts_csv(path: Path, counts: np.ndarray, t0: int = 1_356_998_400) -> None:
    """Emit one record per event: counts[z] rows with timestamps in hour z.

    Region id 0 throughout (city-resolution data)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region", "ts", "load"])
        for z, c in enumerate(counts):
            base = t0 + z * 3600
            for j in range(int(c)):
                writer.writerow([0, base + (j * 997) % 3600, f"{(j % 7) + 1}"])


def hourly_count_profile(days: int, rng: np.random.Generator, *, base: float = 18.0,
                         burst_hours: np.ndarray | None = None, burst_rate: float = 400.0) -> np.ndarray:
    """Poisson hourly event counts with optional co-located burst hours."""
    m = days * 24
    lam = np.full(m, base)
    lam += 6.0 * np.sin(2 * np.pi * np.arange(m) / 24.0) ** 2
    counts = rng.poisson(lam).astype(np.int64)
    if burst_hours is not None:
        counts[burst_hours] += rng.poisson(burst_rate, size=len(burst_hours))
    return counts


def make_demo_corpus(root: Path, n_datasets: int = 20, days: int = 360, seed: int = 7,
                     planted: tuple[tuple[int, int], ...] = ((0, 1), (2, 3)),
                     t0: int = 1_356_998_400) -> list[tuple[str, Path, Path]]:
    """Synthetic city/hour corpus with co-located bursts planted in the given
    dataset pairs; every other dataset is independent noise.

    Returns (name, descriptor path, csv path) triples, ready for ingest.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    m = days * 24

    burst_plan: dict[int, np.ndarray] = {}
    for pair_idx, (a, b) in enumerate(planted):
        hours = np.sort(rng.choice(np.arange(48, m - 48), size=8, replace=False))
        burst_plan[a] = hours
        burst_plan[b] = hours

    out = []
    for i in range(n_datasets):
        name = f"set{i:02d}"
        counts = hourly_count_profile(days, rng, burst_hours=burst_plan.get(i))
        csv_path = root / f"{name}.csv"
        write_hourly_counts_csv(csv_path, counts, t0=t0)
        desc_path = root / f"{name}.descriptor"
        desc_path.write_text(
            f"name: {name}\n"
            "spatial_attr: region\n"
            "spatial_resolution: city\n"
            "temporal_attr: ts\n"
            "temporal_resolution: second\n"
            "numeric_attrs:\n"
            f"time_start: {t0}\n"
            f"time_end: {t0 + m * 3600}\n"
        )
        out.append((name, desc_path, csv_path))
    return out
