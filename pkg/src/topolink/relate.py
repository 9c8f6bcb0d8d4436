"""Relationship score, strength and restricted Monte Carlo significance.

Two functions relate through the overlap of their feature sets: the score
tau is the signed fraction of co-feature points whose polarities agree, and
the strength rho is the F1 overlap of the two feature sets.  Significance
comes from a permutation null that preserves the data's correlation
structure: graph toroidal shifts relocate features while keeping region
adjacency, and circular time shifts do the same for purely temporal data.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field, replace
from concurrent.futures import ThreadPoolExecutor
from itertools import product

import numpy as np

from .errors import DomainMismatchError
from .features import FeatureSet
from .resolution import Resolution
from .stgraph import SpatialDomain
from .timebase import step_index, step_start


def derive_rng(seed: int, *tokens) -> np.random.Generator:
    """Counter-based generator keyed by a stable hash of (seed, tokens).

    Every evaluation derives its own stream, so parallel scheduling cannot
    change any result.
    """
    material = "|".join([str(seed), *map(str, tokens)]).encode("utf-8")
    digest = hashlib.sha256(material).digest()
    key = np.frombuffer(digest, dtype=np.uint64)[:2]
    return np.random.Generator(np.random.Philox(key=key))


# -- feature relatedness ----------------------------------------------------

def _check_compatible(fs1: FeatureSet, fs2: FeatureSet) -> None:
    if fs1.resolution != fs2.resolution:
        raise DomainMismatchError(
            f"resolution mismatch: {fs1.resolution.label} vs {fs2.resolution.label}")
    if fs1.n_regions != fs2.n_regions or fs1.m_steps != fs2.m_steps or fs1.t0 != fs2.t0:
        raise DomainMismatchError("feature sets live on different graphs")


def relatedness(fs1: FeatureSet, fs2: FeatureSet) -> tuple[int, int, np.ndarray]:
    """(positive relations, negative relations, co-feature bitset)."""
    _check_compatible(fs1, fs2)
    n_pos = int(np.count_nonzero(fs1.sigma_plus & fs2.sigma_plus)) + int(
        np.count_nonzero(fs1.sigma_minus & fs2.sigma_minus))
    n_neg = int(np.count_nonzero(fs1.sigma_plus & fs2.sigma_minus)) + int(
        np.count_nonzero(fs1.sigma_minus & fs2.sigma_plus))
    sigma = (fs1.sigma_plus | fs1.sigma_minus) & (fs2.sigma_plus | fs2.sigma_minus)
    return n_pos, n_neg, sigma


def score(n_pos: int, n_neg: int, n_sigma: int) -> float | None:
    """Relationship score in [-1, 1]; None when there is no co-feature point."""
    if n_sigma == 0:
        return None
    return (n_pos - n_neg) / n_sigma


def strength(fs1: FeatureSet, fs2: FeatureSet, n_sigma: int) -> float | None:
    """F1 overlap of the two feature sets.

    Precision measures how often features of the first function are
    co-features; recall, features of the second.  Equals the Dice
    coefficient 2|sigma| / (|sigma1| + |sigma2|).
    """
    n1 = int(np.count_nonzero(fs1.sigma_plus | fs1.sigma_minus))
    n2 = int(np.count_nonzero(fs2.sigma_plus | fs2.sigma_minus))
    if n1 == 0 and n2 == 0:
        return None
    precision = n_sigma / n1 if n1 else 0.0
    recall = n_sigma / n2 if n2 else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


# -- randomizations ---------------------------------------------------------

@dataclass(frozen=True)
class ToroidalMap:
    """Region bijection built by breadth-first propagation from a random
    seed pair, mimicking a toroidal shift on an arbitrary graph."""

    perm: np.ndarray
    preserved_fraction: float


def toroidal_map(domain: SpatialDomain, rng: np.random.Generator,
                 seed_pair: tuple[int, int] | None = None) -> ToroidalMap:
    n = domain.n_regions
    if n == 1:
        return ToroidalMap(perm=np.zeros(1, dtype=np.int64), preserved_fraction=1.0)
    nbrs = domain.neighbor_lists()
    perm = [-1] * n
    used = [False] * n

    def pick(candidates: list[int]) -> int:
        return candidates[int(rng.integers(len(candidates)))]

    pending = list(range(n))
    first = True
    while pending:
        u0 = pick(pending)
        free = [w for w in range(n) if not used[w]]
        if first and seed_pair is not None:
            u0, v0 = seed_pair
        else:
            v0 = pick(free)
        first = False
        perm[u0] = v0
        used[v0] = True
        queue = deque([u0])
        while queue:
            u = queue.popleft()
            image_nbrs = nbrs[perm[u]]
            for un in nbrs[u]:
                if perm[un] >= 0:
                    continue
                candidates = [w for w in image_nbrs if not used[w]]
                if not candidates:
                    candidates = [w for w in range(n) if not used[w]]
                w = pick(candidates)
                perm[un] = w
                used[w] = True
                queue.append(un)
        pending = [u for u in range(n) if perm[u] < 0]

    perm_arr = np.array(perm, dtype=np.int64)
    adj = domain.adjacency_indices()
    if len(adj):
        edge_set = {(int(a), int(b)) for a, b in adj}
        preserved = sum(
            1 for a, b in adj
            if tuple(sorted((int(perm_arr[a]), int(perm_arr[b])))) in edge_set
        ) / len(adj)
    else:
        preserved = 1.0
    return ToroidalMap(perm=perm_arr, preserved_fraction=float(preserved))


def temporal_shift(fs: FeatureSet, k: int) -> FeatureSet:
    """Circular shift on the time axis: a feature at step z moves to
    (z + k) mod m, same region."""
    if not 0 <= k < fs.m_steps:
        raise DomainMismatchError(f"shift {k} outside [0, {fs.m_steps})")
    return replace(
        fs,
        sigma_plus=np.roll(fs.grid_plus(), k, axis=0).ravel(),
        sigma_minus=np.roll(fs.grid_minus(), k, axis=0).ravel(),
    )


def spatial_permute(fs: FeatureSet, perm: np.ndarray) -> FeatureSet:
    """Apply a region bijection identically at every time step."""
    plus = np.empty_like(fs.grid_plus())
    minus = np.empty_like(fs.grid_minus())
    plus[:, perm] = fs.grid_plus()
    minus[:, perm] = fs.grid_minus()
    return replace(fs, sigma_plus=plus.ravel(), sigma_minus=minus.ravel())


# -- significance -----------------------------------------------------------

@dataclass(frozen=True)
class SignificanceConfig:
    shifts: int = 1000
    alpha: float = 0.05
    seed: int = 0
    sided: str = "two-sided"  # 'two-sided' | 'greater' | 'less'

    def __post_init__(self):
        if self.shifts < 1:
            raise ValueError("need at least one shift")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.sided not in ("two-sided", "greater", "less"):
            raise ValueError(f"unknown sidedness {self.sided!r}")


def _hit(delta_k: int, sigma_k: int, delta_star: int, sigma_star: int, sided: str) -> bool:
    """Compare tau_k against tau* in exact integer arithmetic.

    An empty shifted overlap counts as tau_k = 0, keeping the permutation
    distribution defined for sparse features.
    """
    if sided == "two-sided":
        if sigma_k == 0:
            return delta_star == 0
        return abs(delta_k) * sigma_star >= abs(delta_star) * sigma_k
    if sided == "less":
        if sigma_k == 0:
            return delta_star >= 0
        return delta_k * sigma_star <= delta_star * sigma_k
    if sigma_k == 0:
        return delta_star <= 0
    return delta_k * sigma_star >= delta_star * sigma_k


def significance(fs1: FeatureSet, fs2: FeatureSet, domain: SpatialDomain | None,
                 cfg: SignificanceConfig, rng: np.random.Generator | None = None) -> float:
    """Restricted Monte Carlo p-value for the observed relationship score.

    Holds fs1 fixed and randomizes fs2: spatial toroidal maps when the
    resolution has more than one region, circular time shifts otherwise.
    Add-one smoothing keeps p in [1/(shifts+1), 1].
    """
    if rng is None:
        rng = derive_rng(cfg.seed, fs1.provenance.key, fs2.provenance.key,
                         fs1.resolution.label, fs1.mode)
    n_pos, n_neg, sigma = relatedness(fs1, fs2)
    sigma_star = int(np.count_nonzero(sigma))
    if sigma_star == 0:
        raise DomainMismatchError("relationship score undefined: no co-feature points")
    delta_star = n_pos - n_neg

    a_plus, a_minus = fs1.grid_plus(), fs1.grid_minus()
    a_any = a_plus | a_minus
    b_plus, b_minus = fs2.grid_plus(), fs2.grid_minus()
    b_any = b_plus | b_minus
    m = fs1.m_steps

    spatial = fs1.n_regions > 1
    if spatial and domain is None:
        raise DomainMismatchError("spatial randomization needs the region adjacency")
    if not spatial and m < 2:
        return 1.0  # single point: no randomization can move anything

    hits = 0
    for _ in range(cfg.shifts):
        if spatial:
            perm = toroidal_map(domain, rng).perm
            # count(A & P(B)) == count(A[:, perm] & B) for the map P(u) = perm[u]
            ap, am, aa = a_plus[:, perm], a_minus[:, perm], a_any[:, perm]
            bp, bm, ba = b_plus, b_minus, b_any
        else:
            k = int(rng.integers(1, m))
            ap, am, aa = a_plus, a_minus, a_any
            bp = np.roll(b_plus, k, axis=0)
            bm = np.roll(b_minus, k, axis=0)
            ba = np.roll(b_any, k, axis=0)
        pos_k = int(np.count_nonzero(ap & bp)) + int(np.count_nonzero(am & bm))
        neg_k = int(np.count_nonzero(ap & bm)) + int(np.count_nonzero(am & bp))
        sigma_k = int(np.count_nonzero(aa & ba))
        if _hit(pos_k - neg_k, sigma_k, delta_star, sigma_star, cfg.sided):
            hits += 1
    return (1 + hits) / (1 + cfg.shifts)


# -- window alignment -------------------------------------------------------

def common_window(fs1: FeatureSet, fs2: FeatureSet) -> tuple[FeatureSet, FeatureSet]:
    """Restrict both feature sets to their overlapping time window.

    Same-resolution grids share calendar-aligned boundaries, so the overlap
    is always a whole number of steps.
    """
    if fs1.resolution != fs2.resolution or fs1.n_regions != fs2.n_regions:
        raise DomainMismatchError("cannot align feature sets at different resolutions")
    unit = fs1.temporal_unit
    t_start = max(fs1.t0, fs2.t0)
    t_end = min(step_start(fs1.t0, unit, fs1.m_steps), step_start(fs2.t0, unit, fs2.m_steps))
    if t_end <= t_start:
        raise DomainMismatchError("feature sets share no time window")

    def clip(fs: FeatureSet) -> FeatureSet:
        z0 = step_index(fs.t0, unit, t_start)
        z1 = step_index(fs.t0, unit, t_end - 1) + 1
        if z0 == 0 and z1 == fs.m_steps:
            return fs
        return replace(
            fs,
            t0=t_start,
            m_steps=z1 - z0,
            sigma_plus=fs.grid_plus()[z0:z1].ravel(),
            sigma_minus=fs.grid_minus()[z0:z1].ravel(),
        )

    return clip(fs1), clip(fs2)


# -- the relation operator --------------------------------------------------

@dataclass(frozen=True)
class FunctionRef:
    dataset: str
    name: str

    @property
    def key(self) -> str:
        return f"{self.dataset}:{self.name}"


@dataclass(frozen=True)
class RelationshipResult:
    dataset1: str
    function1: str
    dataset2: str
    function2: str
    resolution: Resolution
    mode: str
    tau: float
    rho: float
    p_value: float
    significant: bool
    n_sigma: int
    n_pos: int
    n_neg: int
    seed: int

    @property
    def sort_key(self):
        return (-abs(self.tau), -self.rho, self.dataset1, self.function1,
                self.dataset2, self.function2, self.resolution.label, self.mode)

    def to_record(self) -> dict:
        return {
            "dataset1": self.dataset1, "function1": self.function1,
            "dataset2": self.dataset2, "function2": self.function2,
            "spatial": self.resolution.spatial.value,
            "temporal": self.resolution.temporal.value,
            "mode": self.mode,
            "tau": round(self.tau, 12), "rho": round(self.rho, 12),
            "p_value": round(self.p_value, 12),
            "significant": self.significant,
            "n_sigma": self.n_sigma, "n_pos": self.n_pos, "n_neg": self.n_neg,
            "seed": self.seed,
        }


@dataclass
class RelationReport:
    evaluated: int = 0
    emitted: int = 0
    not_significant: int = 0
    not_related: int = 0
    filtered: int = 0
    missing_features: int = 0
    no_common_resolution: list = field(default_factory=list)


def relation(refs1, refs2, store, *, min_score: float = 0.0, min_strength: float = 0.0,
             modes=("salient", "extreme"), alpha: float = 0.05, shifts: int = 1000,
             seed: int = 0, sided: str = "two-sided", user_thresholds=None,
             workers: int | None = None,
             exclude_same_dataset: bool = False) -> tuple[list[RelationshipResult], RelationReport]:
    """Evaluate every function pair at every common resolution and mode.

    ``store`` supplies precomputed artifacts: ``resolutions(ref)``,
    ``feature_set(ref, resolution, mode)`` (None when the mode is absent),
    ``features_at(ref, resolution, theta_plus, theta_minus)`` for
    user-supplied thresholds, and ``spatial_domain(spatial_res)``.

    Returns the statistically significant relationships sorted by
    (|tau| desc, rho desc), plus a report of everything pruned on the way.
    """
    user_thresholds = user_thresholds or {}
    cfg_base = SignificanceConfig(shifts=shifts, alpha=alpha, seed=seed, sided=sided)
    report = RelationReport()

    tasks = []
    for r1, r2 in product(refs1, refs2):
        if exclude_same_dataset and r1.dataset == r2.dataset:
            continue
        common = sorted(set(store.resolutions(r1)) & set(store.resolutions(r2)),
                        key=lambda r: r.rank)
        if not common:
            report.no_common_resolution.append((r1.key, r2.key))
            continue
        for res in common:
            for mode in modes:
                tasks.append((r1, r2, res, mode))

    def fetch(ref: FunctionRef, res: Resolution, mode: str) -> FeatureSet | None:
        if mode == "salient" and (ref.dataset, ref.name) in user_thresholds:
            tp, tm = user_thresholds[(ref.dataset, ref.name)]
            return store.features_at(ref, res, tp, tm)
        return store.feature_set(ref, res, mode)

    def evaluate(task):
        r1, r2, res, mode = task
        fs1 = fetch(r1, res, mode)
        fs2 = fetch(r2, res, mode)
        if fs1 is None or fs2 is None:
            return ("missing", None)
        try:
            fs1, fs2 = common_window(fs1, fs2)
        except DomainMismatchError:
            return ("missing", None)
        n_pos, n_neg, sigma = relatedness(fs1, fs2)
        n_sigma = int(np.count_nonzero(sigma))
        tau = score(n_pos, n_neg, n_sigma)
        if tau is None:
            return ("not_related", None)
        rho = strength(fs1, fs2, n_sigma)
        if abs(tau) < min_score or (rho or 0.0) < min_strength:
            return ("filtered", None)
        rng = derive_rng(seed, r1.key, r2.key, res.label, mode)
        domain = store.spatial_domain(res.spatial) if fs1.n_regions > 1 else None
        p = significance(fs1, fs2, domain, cfg_base, rng=rng)
        if p > alpha:
            return ("not_significant", None)
        return ("ok", RelationshipResult(
            dataset1=r1.dataset, function1=r1.name,
            dataset2=r2.dataset, function2=r2.name,
            resolution=res, mode=mode, tau=tau, rho=rho, p_value=p,
            significant=True, n_sigma=n_sigma, n_pos=n_pos, n_neg=n_neg,
            seed=seed,
        ))

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(evaluate, tasks))
    else:
        outcomes = [evaluate(t) for t in tasks]

    results = []
    for status, payload in outcomes:
        report.evaluated += 1
        if status == "ok":
            results.append(payload)
        elif status == "missing":
            report.missing_features += 1
        elif status == "not_related":
            report.not_related += 1
        elif status == "filtered":
            report.filtered += 1
        else:
            report.not_significant += 1
    report.emitted = len(results)
    results.sort(key=lambda r: r.sort_key)
    return results, report
