"""Corpus catalog, precomputation pipeline and the query engine.

A corpus directory holds registered datasets, per-resolution region files,
and the per-function artifacts a relationship query needs: the scalar
function, its join/split tree indices, and precomputed salient/extreme
feature sets.  Query results are cached keyed by the clause, the seed and
the artifact versions, so a repeated query returns byte-identical output.
"""

from __future__ import annotations

import hashlib
import json
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import CorpusError, IngestError
from .features import (
    FeatureSet,
    feature_sets,
    load_feature_set,
    query_sublevel,
    query_superlevel,
    save_feature_set,
    seasonal_intervals,
)
from .ingest import (
    DatasetDescriptor,
    aggregate,
    function_kinds,
    load_function,
    load_spatial_domain,
    parse_csv,
    parse_descriptor,
    save_function,
)
from .mergetree import MergeTree, join_tree, split_tree
from .relate import FunctionRef, RelationshipResult, relation
from .resolution import Resolution, SpatialRes, compatible_resolutions
from .stgraph import SpatialDomain


@dataclass(frozen=True)
class QueryClause:
    """Filters and parameters of one relationship query.

    An empty ``d2`` means "the whole corpus".  ``thresholds`` carries
    optional user-supplied (theta_plus, theta_minus) per function, which are
    applied through the merge tree index instead of the stored salient
    features.
    """

    d1: tuple[str, ...]
    d2: tuple[str, ...] = ()
    min_score: float = 0.0
    min_strength: float = 0.0
    mode: str = "both"  # 'salient' | 'extreme' | 'both'
    alpha: float = 0.05
    shifts: int = 1000
    seed: int = 0
    thresholds: tuple[tuple[str, str, float | None, float | None], ...] = ()

    def __post_init__(self):
        if not self.d1:
            raise CorpusError("a query needs at least one dataset in d1")
        if not 0.0 <= self.min_score <= 1.0 or not 0.0 <= self.min_strength <= 1.0:
            raise CorpusError("min_score and min_strength must be in [0, 1]")
        if self.mode not in ("salient", "extreme", "both"):
            raise CorpusError(f"unknown mode {self.mode!r}")

    @property
    def modes(self) -> tuple[str, ...]:
        return ("salient", "extreme") if self.mode == "both" else (self.mode,)

    def canonical(self) -> dict:
        return {
            "d1": sorted(self.d1),
            "d2": sorted(self.d2),
            "min_score": self.min_score,
            "min_strength": self.min_strength,
            "mode": self.mode,
            "alpha": self.alpha,
            "shifts": self.shifts,
            "seed": self.seed,
            "thresholds": sorted(self.thresholds),
        }


@dataclass
class DatasetBuildInfo:
    dataset: str
    functions: int = 0
    skipped_fresh: int = 0
    records_kept: int = 0
    records_skipped: int = 0
    seconds: float = 0.0
    error: str | None = None


@dataclass
class BuildReport:
    entries: list[DatasetBuildInfo] = field(default_factory=list)

    @property
    def functions(self) -> int:
        return sum(e.functions for e in self.entries)

    @property
    def failures(self) -> list[DatasetBuildInfo]:
        return [e for e in self.entries if e.error]


@dataclass
class QueryOutcome:
    results: list[RelationshipResult]
    report: dict
    cached: bool


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Corpus:
    def __init__(self, root):
        self.root = Path(root)
        self._domains: dict[SpatialRes, tuple[SpatialDomain, dict | None]] = {}

    # -- layout ---------------------------------------------------------

    @property
    def catalog_path(self) -> Path:
        return self.root / "catalog.json"

    def dataset_dir(self, name: str) -> Path:
        return self.root / "datasets" / name

    def artifact_dir(self, name: str, function: str, res: Resolution) -> Path:
        return self.root / "artifacts" / name / f"{function}__{res.spatial.value}_{res.temporal.value}"

    def cache_dir(self) -> Path:
        return self.root / "cache"

    def _catalog(self) -> dict:
        if not self.catalog_path.exists():
            return {"datasets": {}}
        return json.loads(self.catalog_path.read_text())

    def _save_catalog(self, catalog: dict) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.catalog_path.write_text(json.dumps(catalog, indent=2, sort_keys=True))

    # -- registration ---------------------------------------------------

    def register(self, descriptor_path, csv_path) -> DatasetDescriptor:
        """Validate and catalog a dataset; the CLI ``ingest`` front door."""
        descriptor_path, csv_path = Path(descriptor_path), Path(csv_path)
        desc = parse_descriptor(descriptor_path.read_text())
        # Header validation happens up front so a bad descriptor fails fast.
        import csv as _csv

        with open(csv_path, newline="") as fh:
            header = next(_csv.reader(fh), None)
        if header is None:
            raise IngestError(f"{csv_path}: empty CSV")
        from .ingest import validate_columns

        validate_columns(desc, header)

        target = self.dataset_dir(desc.name)
        target.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(descriptor_path, target / "descriptor.txt")
        catalog = self._catalog()
        catalog["datasets"][desc.name] = {
            "descriptor": str(target / "descriptor.txt"),
            "csv": str(csv_path.resolve()),
            "source_hash": self._source_hash(target / "descriptor.txt", csv_path),
        }
        self._save_catalog(catalog)
        return desc

    @staticmethod
    def _source_hash(descriptor_path: Path, csv_path: Path) -> str:
        h = hashlib.sha256()
        h.update(descriptor_path.read_bytes())
        h.update(bytes.fromhex(_sha256_file(csv_path)))
        return h.hexdigest()

    def datasets(self) -> list[str]:
        return sorted(self._catalog()["datasets"])

    def _entry(self, name: str) -> dict:
        catalog = self._catalog()
        if name not in catalog["datasets"]:
            raise CorpusError(f"unknown dataset {name!r}")
        return catalog["datasets"][name]

    def descriptor(self, name: str) -> DatasetDescriptor:
        return parse_descriptor(Path(self._entry(name)["descriptor"]).read_text())

    # -- spatial regions --------------------------------------------------

    def spatial_domain(self, spatial: SpatialRes) -> SpatialDomain:
        return self._spatial(spatial)[0]

    def _spatial(self, spatial: SpatialRes) -> tuple[SpatialDomain, dict | None]:
        if spatial in self._domains:
            return self._domains[spatial]
        if spatial is SpatialRes.CITY:
            out = (SpatialDomain.city(), None)
        else:
            base = self.root / "regions" / spatial.value
            poly, adj = base.with_suffix(".polygons"), base.with_suffix(".adj")
            if not poly.exists() or not adj.exists():
                raise CorpusError(f"no region files for {spatial.value} under {self.root / 'regions'}")
            out = load_spatial_domain(poly, adj)
        self._domains[spatial] = out
        return out

    # -- build -------------------------------------------------------------

    def build(self, names=None, workers: int | None = None, force: bool = False) -> BuildReport:
        """Materialize functions, tree indices and feature sets.

        Per-dataset failures are isolated: the report carries the error and
        the build moves on.
        """
        report = BuildReport()
        for name in (names or self.datasets()):
            info = DatasetBuildInfo(dataset=name)
            started = time.perf_counter()
            try:
                self._build_dataset(name, info, workers=workers, force=force)
            except Exception as exc:  # noqa: BLE001 - failures isolated by contract
                info.error = f"{type(exc).__name__}: {exc}"
            info.seconds = time.perf_counter() - started
            report.entries.append(info)
        return report

    def _build_dataset(self, name: str, info: DatasetBuildInfo,
                       workers: int | None = None, force: bool = False) -> None:
        entry = self._entry(name)
        desc = self.descriptor(name)
        source_hash = entry["source_hash"]
        resolutions = compatible_resolutions(desc.native)
        kinds = function_kinds(desc)

        tasks = []
        for res in resolutions:
            for kind in kinds:
                adir = self.artifact_dir(name, kind.name, res)
                meta_path = adir / "meta.json"
                if not force and meta_path.exists():
                    meta = json.loads(meta_path.read_text())
                    if meta.get("source_hash") == source_hash:
                        info.skipped_fresh += 1
                        continue
                tasks.append((res, kind, adir))
        if not tasks:
            return

        records = parse_csv(entry["csv"], desc)
        info.records_kept = records.skips.kept
        info.records_skipped = records.skips.total - records.skips.kept

        def run(task):
            res, kind, adir = task
            domain, polygons = self._spatial(res.spatial)
            f = aggregate(records, desc, res, kind, domain, polygons)
            jtree, _ = join_tree(f.graph, f)
            stree, _ = split_tree(f.graph, f)
            fsets, thresholds = feature_sets(f, jtree, stree, seasonal_intervals(f.graph.td))
            adir.mkdir(parents=True, exist_ok=True)
            save_function(f, adir / "function.stfn")
            jtree.save(adir / "join.mtre")
            stree.save(adir / "split.mtre")
            meta = {
                "source_hash": source_hash,
                "dataset": name,
                "function": kind.name,
                "kind": kind.kind,
                "resolution": f.provenance.resolution.label,
                "modes": sorted(fsets),
                "thresholds": [asdict(t) for t in thresholds],
                "feature_counts": {mode: fs.counts() for mode, fs in fsets.items()},
                "n_regions": f.graph.n_regions,
                "m_steps": f.graph.m_steps,
            }
            for mode, fs in fsets.items():
                save_feature_set(fs, adir / f"{mode}.fset")
            (adir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
            return kind.name

        if workers and workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                built = list(pool.map(run, tasks))
        else:
            built = [run(t) for t in tasks]
        info.functions += len(built)

    # -- artifact access -----------------------------------------------------

    def functions(self, name: str) -> list[FunctionRef]:
        adir = self.root / "artifacts" / name
        if not adir.exists():
            raise CorpusError(f"dataset {name!r} has no built artifacts")
        names = sorted({p.name.rsplit("__", 1)[0] for p in adir.iterdir() if p.is_dir()})
        return [FunctionRef(dataset=name, name=fn) for fn in names]

    def resolutions(self, ref: FunctionRef) -> list[Resolution]:
        adir = self.root / "artifacts" / ref.dataset
        out = []
        prefix = f"{ref.name}__"
        for p in sorted(adir.iterdir()):
            if p.is_dir() and p.name.startswith(prefix):
                spatial, temporal = p.name[len(prefix):].split("_")
                out.append(Resolution.parse(f"{spatial}/{temporal}"))
        return out

    def _fresh_dir(self, ref: FunctionRef, res: Resolution) -> Path:
        adir = self.artifact_dir(ref.dataset, ref.name, res)
        meta_path = adir / "meta.json"
        if not meta_path.exists():
            raise CorpusError(f"no artifacts for {ref.key} at {res.label}; run build")
        meta = json.loads(meta_path.read_text())
        if meta.get("source_hash") != self._entry(ref.dataset)["source_hash"]:
            raise CorpusError(f"stale artifacts for {ref.key} at {res.label}; rebuild")
        return adir

    def feature_set(self, ref: FunctionRef, res: Resolution, mode: str) -> FeatureSet | None:
        path = self._fresh_dir(ref, res) / f"{mode}.fset"
        if not path.exists():
            return None
        return load_feature_set(path)

    def features_at(self, ref: FunctionRef, res: Resolution,
                    theta_plus: float | None, theta_minus: float | None) -> FeatureSet:
        """Feature sets for user-supplied thresholds, straight off the index."""
        adir = self._fresh_dir(ref, res)
        domain = self.spatial_domain(res.spatial)
        f = load_function(adir / "function.stfn", domain)
        nv = f.graph.n_vertices
        plus = np.zeros(nv, dtype=bool)
        minus = np.zeros(nv, dtype=bool)
        if theta_plus is not None:
            jtree = MergeTree.load(adir / "join.mtre", f.values)
            plus = query_superlevel(jtree, f, theta_plus)
        if theta_minus is not None:
            stree = MergeTree.load(adir / "split.mtre", f.values)
            minus = query_sublevel(stree, f, theta_minus)
        return FeatureSet(
            provenance=f.provenance, mode="salient",
            n_regions=f.graph.n_regions, m_steps=f.graph.m_steps,
            t0=f.graph.td.t0, temporal_unit=f.graph.td.unit,
            sigma_plus=plus, sigma_minus=minus,
        )

    def series(self, ref: FunctionRef, res: Resolution) -> np.ndarray:
        """City-resolution value series of a built function."""
        adir = self._fresh_dir(ref, res)
        f = load_function(adir / "function.stfn", self.spatial_domain(res.spatial))
        return f.values

    def inspect(self, name: str) -> list[dict]:
        """Metadata of every built function of a dataset."""
        out = []
        for ref in self.functions(name):
            for res in self.resolutions(ref):
                meta = json.loads((self._fresh_dir(ref, res) / "meta.json").read_text())
                out.append(meta)
        return out

    # -- query ----------------------------------------------------------------

    def _cache_key(self, clause: QueryClause, refs1, refs2) -> str:
        payload = {
            "clause": clause.canonical(),
            "artifacts": sorted(
                f"{ref.key}@{self._entry(ref.dataset)['source_hash']}"
                for ref in {*refs1, *refs2}
            ),
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def query(self, clause: QueryClause, workers: int | None = None) -> QueryOutcome:
        """Evaluate a relationship query, serving from cache when possible."""
        d1 = list(dict.fromkeys(clause.d1))
        d2 = list(dict.fromkeys(clause.d2)) or self.datasets()
        for name in {*d1, *d2}:
            self._entry(name)

        refs1 = [ref for name in d1 for ref in self.functions(name)]
        refs2 = [ref for name in d2 for ref in self.functions(name)]

        key = self._cache_key(clause, refs1, refs2)
        cache_path = self.cache_dir() / f"{key}.json"
        if cache_path.exists():
            payload = json.loads(cache_path.read_text())
            results = [self._result_from_record(r) for r in payload["results"]]
            return QueryOutcome(results=results, report=payload["report"], cached=True)

        user_thresholds = {(d, fn): (tp, tm) for d, fn, tp, tm in clause.thresholds}
        results, report = relation(
            refs1, refs2, _CorpusStore(self),
            min_score=clause.min_score, min_strength=clause.min_strength,
            modes=clause.modes, alpha=clause.alpha, shifts=clause.shifts,
            seed=clause.seed, user_thresholds=user_thresholds, workers=workers,
            exclude_same_dataset=True,
        )
        report_dict = {
            "evaluated": report.evaluated,
            "emitted": len(results),
            "not_significant": report.not_significant,
            "not_related": report.not_related,
            "filtered": report.filtered,
            "missing_features": report.missing_features,
            "no_common_resolution": report.no_common_resolution,
        }
        payload = {"results": [r.to_record() for r in results], "report": report_dict}
        self.cache_dir().mkdir(parents=True, exist_ok=True)
        cache_path.write_text(json.dumps(payload, sort_keys=True))
        return QueryOutcome(results=results, report=report_dict, cached=False)

    @staticmethod
    def _result_from_record(rec: dict) -> RelationshipResult:
        return RelationshipResult(
            dataset1=rec["dataset1"], function1=rec["function1"],
            dataset2=rec["dataset2"], function2=rec["function2"],
            resolution=Resolution.parse(f"{rec['spatial']}/{rec['temporal']}"),
            mode=rec["mode"], tau=rec["tau"], rho=rec["rho"],
            p_value=rec["p_value"], significant=rec["significant"],
            n_sigma=rec["n_sigma"], n_pos=rec["n_pos"], n_neg=rec["n_neg"],
            seed=rec["seed"],
        )


class _CorpusStore:
    """Feature store handed to the relation operator."""

    def __init__(self, corpus: Corpus):
        self.corpus = corpus

    def resolutions(self, ref: FunctionRef):
        return self.corpus.resolutions(ref)

    def feature_set(self, ref: FunctionRef, res: Resolution, mode: str):
        return self.corpus.feature_set(ref, res, mode)

    def features_at(self, ref: FunctionRef, res: Resolution, tp, tm):
        return self.corpus.features_at(ref, res, tp, tm)

    def spatial_domain(self, spatial: SpatialRes):
        return self.corpus.spatial_domain(spatial)
