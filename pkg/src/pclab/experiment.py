"""Seeded experiment grids and everything they leave on disk.

Layout of one experiment on disk::

    <output_dir>/<name>/
        spec.json            echo of the experiment spec
        table.csv            one row per (kind, seed)
        aggregate.csv        mean/std per kind
        summary.txt          human-readable version of the above
        <kind>/<seed>/
            config.json      full training config echo
            metrics.csv      per-interval metrics
            record.json      final diagnostics; written last, marks completion
            embeddings.csv   features of every source and target point
            class_weights.csv
            checkpoint.json
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ConfigError
from .model import ClassifierWeights, Encoder, Model
from .losses import ProjectionHead
from .synthdata import DEFAULT_SHIFT, Benchmark, ShiftSpec, make_benchmark
from .training import TrainConfig, evaluate_target, train

log = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = 1
BASELINE = "Baseline"
_SAFE_NAME = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")

TABLE_COLUMNS = (
    "kind",
    "seed",
    "status",
    "actual_accuracy",
    "oracle_accuracy",
    "gap",
    "deviation_score",
    "mean_max_prob",
)
AGGREGATE_METRICS = ("actual_accuracy", "oracle_accuracy", "gap", "deviation_score", "mean_max_prob")
BAR_COLUMNS = ("kind", "seed", "actual_accuracy", "oracle_accuracy")
EMBEDDING_COLUMNS = ("kind", "seed", "point", "domain", "label", "dim", "value")
WEIGHT_COLUMNS = ("kind", "seed", "class", "dim", "value")


# --------------------------------------------------------------------------
# specs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSpec:
    classes: int = 4
    n_per_class: int = 50
    shots: int = 3
    shift: ShiftSpec = DEFAULT_SHIFT
    radius: float = 2.0
    source_sigma: float = 0.35

    def build(self, seed: int) -> Benchmark:
        return make_benchmark(
            classes=self.classes,
            n_per_class=self.n_per_class,
            shots=self.shots,
            shift=self.shift,
            seed=seed,
            radius=self.radius,
            source_sigma=self.source_sigma,
        )

    def to_dict(self) -> dict:
        return {
            "classes": self.classes,
            "n_per_class": self.n_per_class,
            "shots": self.shots,
            "shift": self.shift.to_dict(),
            "radius": self.radius,
            "source_sigma": self.source_sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> DatasetSpec:
        d = dict(d)
        if "shift" in d:
            d["shift"] = ShiftSpec(**d["shift"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad dataset spec: {exc}") from None


@dataclass(frozen=True)
class GridEntry:
    """One column of the grid: a loss kind (or ``Baseline``) plus training overrides."""

    kind: str
    overrides: dict = field(default_factory=dict)

    def config(self, base: dict, seed: int) -> TrainConfig:
        cfg = TrainConfig(seed=seed).with_overrides(base)
        if self.kind == BASELINE:
            cfg = cfg.with_overrides({"lambda_contrastive": 0.0})
        else:
            cfg = cfg.with_overrides({"loss": {"kind": self.kind}})
        return cfg.with_overrides({**self.overrides, "seed": seed})


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    grid: tuple[GridEntry, ...]
    seeds: tuple[int, ...]
    output_dir: str = "runs"
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    train: dict = field(default_factory=dict)

    def __post_init__(self):
        if not _SAFE_NAME.match(self.name or ""):
            raise ConfigError(f"experiment name {self.name!r} is not filesystem-safe")
        if not self.grid or not self.seeds:
            raise ConfigError("grid and seeds must both be non-empty")
        labels = [g.kind for g in self.grid]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate grid kinds: {labels}")
        for g in self.grid:
            if not _SAFE_NAME.match(g.kind):
                raise ConfigError(f"grid kind {g.kind!r} is not filesystem-safe")
            g.config(self.train, self.seeds[0])  # fail fast on bad overrides

    @property
    def root(self) -> Path:
        return Path(self.output_dir) / self.name

    def cell_dir(self, kind: str, seed: int) -> Path:
        return self.root / kind / str(seed)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentSpec:
        unknown = set(d) - {"name", "grid", "seeds", "output_dir", "dataset", "train"}
        if unknown:
            raise ConfigError(f"unknown spec keys: {sorted(unknown)}")
        grid = []
        for g in d.get("grid", []):
            grid.append(GridEntry(g) if isinstance(g, str) else GridEntry(g["kind"], dict(g.get("overrides", {}))))
        return cls(
            name=d.get("name", ""),
            grid=tuple(grid),
            seeds=tuple(int(s) for s in d.get("seeds", [])),
            output_dir=d.get("output_dir", "runs"),
            dataset=DatasetSpec.from_dict(d.get("dataset", {})),
            train=dict(d.get("train", {})),
        )

    @classmethod
    def from_json(cls, path) -> ExperimentSpec:
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "grid": [{"kind": g.kind, "overrides": g.overrides} for g in self.grid],
            "seeds": list(self.seeds),
            "output_dir": str(self.output_dir),
            "dataset": self.dataset.to_dict(),
            "train": self.train,
        }


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------


def checkpoint_save(model: Model, path, rng_state=None, config: dict | None = None) -> None:
    doc = {
        "schema_version": CHECKPOINT_SCHEMA,
        "architecture": {
            "encoder_widths": model.encoder.widths,
            "num_classes": model.classifier.num_classes,
            "head": model.head is not None,
        },
        "parameters": [
            {"name": name, "shape": list(p.shape), "data": p.data.reshape(-1).tolist()}
            for name, p in model.named_parameters()
        ],
        "rng_state": rng_state,
        "config": config,
    }
    Path(path).write_text(json.dumps(doc))


def read_checkpoint(path) -> dict:
    """Parse and validate a checkpoint document without building a model."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CheckpointError("missing", f"{path} does not exist") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError("parse", f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise CheckpointError("parse", "top level is not an object")
    version = doc.get("schema_version")
    if version != CHECKPOINT_SCHEMA:
        raise CheckpointError("schema", f"schema_version {version!r}, expected {CHECKPOINT_SCHEMA}")
    for key in ("architecture", "parameters"):
        if key not in doc:
            raise CheckpointError("missing", f"no {key!r} section")
    for entry in doc["parameters"]:
        shape = entry.get("shape")
        data = entry.get("data")
        if not isinstance(shape, list) or not isinstance(data, list) or math.prod(shape) != len(data):
            raise CheckpointError("shape", f"parameter {entry.get('name')!r}: data does not fill shape {shape}")
    return doc


def checkpoint_load(path, model: Model | None = None) -> Model:
    """Rebuild a model from ``path`` (or fill ``model`` in place)."""
    doc = read_checkpoint(path)
    arch = doc["architecture"]
    if model is None:
        try:
            widths = arch["encoder_widths"]
            encoder = Encoder(widths)
            classifier = ClassifierWeights(arch["num_classes"], widths[-1], zero=True)
            head = ProjectionHead(widths[-1]) if arch.get("head") else None
        except (KeyError, TypeError, IndexError) as exc:
            raise CheckpointError("missing", f"incomplete architecture: {exc}") from None
        model = Model(encoder, classifier, head)
    named = dict(model.named_parameters())
    stored = {e["name"]: e for e in doc["parameters"]}
    if set(named) != set(stored):
        raise CheckpointError("shape", f"parameter names differ: {sorted(set(named) ^ set(stored))}")
    for name, p in named.items():
        entry = stored[name]
        if tuple(entry["shape"]) != p.shape:
            raise CheckpointError("shape", f"{name}: stored {tuple(entry['shape'])}, model {p.shape}")
        p.data[...] = np.asarray(entry["data"], dtype=np.float64).reshape(p.shape)
    return model


# --------------------------------------------------------------------------
# grid execution
# --------------------------------------------------------------------------


@dataclass
class ComparisonTable:
    rows: list[dict]
    executed_cells: int = 0

    def aggregates(self) -> dict[str, dict[str, tuple[float, float]]]:
        """``{kind: {metric: (mean, std)}}`` over successful rows."""
        out: dict[str, dict[str, tuple[float, float]]] = {}
        kinds = list(dict.fromkeys(r["kind"] for r in self.rows))
        for kind in kinds:
            ok = [r for r in self.rows if r["kind"] == kind and r["status"] == "ok"]
            stats = {}
            for m in AGGREGATE_METRICS:
                vals = [r[m] for r in ok if r.get(m) is not None]
                if not vals:
                    stats[m] = (math.nan, math.nan)
                else:
                    stats[m] = (statistics.fmean(vals), statistics.stdev(vals) if len(vals) > 1 else 0.0)
            out[kind] = stats
        return out

    @property
    def all_ok(self) -> bool:
        return all(r["status"] == "ok" for r in self.rows)

    def row(self, kind: str, seed: int) -> dict:
        return next(r for r in self.rows if r["kind"] == kind and r["seed"] == seed)

    def write(self, root: Path) -> None:
        with open(root / "table.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS, extrasaction="ignore")
            w.writeheader()
            w.writerows(self.rows)
        agg = self.aggregates()
        with open(root / "aggregate.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "n"] + [f"{m}_{s}" for m in AGGREGATE_METRICS for s in ("mean", "std")])
            for kind, stats in agg.items():
                n = sum(1 for r in self.rows if r["kind"] == kind and r["status"] == "ok")
                w.writerow([kind, n] + [v for m in AGGREGATE_METRICS for v in stats[m]])
        (root / "summary.txt").write_text(self.summary())

    def summary(self) -> str:
        lines = [f"{'kind':<10} {'acc':>14} {'oracle':>14} {'gap':>14} {'deviation':>14} {'max-prob':>14}"]
        for kind, stats in self.aggregates().items():
            cells = " ".join(f"{100 * mu:6.2f}±{100 * sd:5.2f}  " for mu, sd in (stats[m] for m in AGGREGATE_METRICS))
            lines.append(f"{kind:<10} {cells}".rstrip())
        bad = [r for r in self.rows if r["status"] != "ok"]
        for r in bad:
            lines.append(f"!! {r['kind']} seed {r['seed']}: {r['status']} {r.get('error') or ''}".rstrip())
        return "\n".join(lines) + "\n"


def _row_from_record(kind: str, seed: int, rec: dict) -> dict:
    final = rec["final"]
    status = "diverged" if final.get("diverged") else "ok"
    return {
        "kind": kind,
        "seed": seed,
        "status": status,
        "actual_accuracy": final.get("actual_accuracy"),
        "oracle_accuracy": final.get("oracle_accuracy"),
        "gap": final.get("oracle_gap"),
        "deviation_score": final.get("deviation_score"),
        "mean_max_prob": final.get("mean_max_prob"),
        "error": final.get("failure"),
    }


def run_cell(spec_dict: dict, kind: str, seed: int, force: bool = False) -> tuple[dict, bool]:
    """Train one (kind, seed) cell unless already complete. Never raises.

    Returns the table row and whether training actually ran.
    """
    spec = ExperimentSpec.from_dict(spec_dict)
    entry = next(g for g in spec.grid if g.kind == kind)
    cell = spec.cell_dir(kind, seed)
    done = cell / "record.json"
    if done.exists() and not force:
        return _row_from_record(kind, seed, json.loads(done.read_text())), False
    try:
        cfg = entry.config(spec.train, seed)
        cell.mkdir(parents=True, exist_ok=True)
        (cell / "config.json").write_text(
            json.dumps({"train": cfg.to_dict(), "dataset": spec.dataset.to_dict(), "kind": kind}, indent=2)
        )
        if done.exists():
            done.unlink()
        record = train(cfg, spec.dataset.build(seed))
        checkpoint_save(record.model, cell / "checkpoint.json", rng_state=record.rng_state, config=cfg.to_dict())
        record.write(cell)
        return _row_from_record(kind, seed, record.to_json_dict()), True
    except Exception as exc:  # one bad cell must not sink the grid
        log.exception("cell %s/%s failed", kind, seed)
        row = {"kind": kind, "seed": seed, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}
        return {**{c: None for c in TABLE_COLUMNS}, **row}, True


def run_experiment(spec: ExperimentSpec, force: bool = False, jobs: int = 1) -> ComparisonTable:
    root = spec.root
    root.mkdir(parents=True, exist_ok=True)
    (root / "spec.json").write_text(json.dumps(spec.to_dict(), indent=2))

    cells = [(g.kind, s) for g in spec.grid for s in spec.seeds]
    spec_dict = spec.to_dict()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_cell, spec_dict, k, s, force) for k, s in cells]
            results = [f.result() for f in futures]
    else:
        results = [run_cell(spec_dict, k, s, force) for k, s in cells]

    table = ComparisonTable(rows=[r for r, _ in results], executed_cells=sum(ran for _, ran in results))
    table.write(root)
    return table


# --------------------------------------------------------------------------
# plot data
# --------------------------------------------------------------------------


@dataclass
class PlotBundle:
    bars: Path
    embeddings: Path
    class_weights: Path
    warnings: list[str]


def _find_cells(paths) -> list[Path]:
    found = []
    for p in paths:
        p = Path(p)
        if (p / "config.json").exists():
            found.append(p)
        elif p.is_dir():
            found.extend(sorted(c.parent for c in p.rglob("config.json")))
    return list(dict.fromkeys(found))


def emit_plot_data(run_dirs, out_dir) -> PlotBundle:
    """Collect actual-vs-oracle bars and embedding scatter data from finished runs.

    ``run_dirs`` may mix cell directories and directories containing cells.
    Cells without a ``record.json`` are skipped and reported in ``warnings``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = PlotBundle(out / "bars.csv", out / "embeddings.csv", out / "class_weights.csv", [])
    if isinstance(run_dirs, (str, Path)):
        run_dirs = [run_dirs]
    with open(bundle.bars, "w", newline="") as fb, open(bundle.embeddings, "w", newline="") as fe, open(
        bundle.class_weights, "w", newline=""
    ) as fw:
        bars, emb, wts = csv.writer(fb), csv.writer(fe), csv.writer(fw)
        bars.writerow(BAR_COLUMNS)
        emb.writerow(EMBEDDING_COLUMNS)
        wts.writerow(WEIGHT_COLUMNS)
        for cell in _find_cells(run_dirs):
            kind, seed = cell.parent.name, cell.name
            rec_path = cell / "record.json"
            if not rec_path.exists():
                bundle.warnings.append(f"{cell}: run incomplete (no record.json)")
                continue
            final = json.loads(rec_path.read_text())["final"]
            bars.writerow([kind, seed, final.get("actual_accuracy"), final.get("oracle_accuracy")])
            if (cell / "embeddings.csv").exists():
                with open(cell / "embeddings.csv", newline="") as fh:
                    for point, row in enumerate(csv.DictReader(fh)):
                        dims = sorted((k for k in row if k.startswith("f")), key=lambda k: int(k[1:]))
                        for k in dims:
                            emb.writerow([kind, seed, point, row["domain"], row["label"], k[1:], row[k]])
            else:
                bundle.warnings.append(f"{cell}: no embeddings.csv")
            if (cell / "class_weights.csv").exists():
                with open(cell / "class_weights.csv", newline="") as fh:
                    for row in csv.DictReader(fh):
                        for k in (k for k in row if k.startswith("w")):
                            wts.writerow([kind, seed, row["class"], k[1:], row[k]])
    for w in bundle.warnings:
        log.warning(w)
    return bundle


def evaluate_checkpoint(path, data: Benchmark) -> dict:
    """Target metrics of a checkpointed model; used for cross-process checks."""
    model = checkpoint_load(path)
    return evaluate_target(model, data.target.points, data.target.ground_truth())


__all__ = [
    "BASELINE",
    "DatasetSpec",
    "GridEntry",
    "ExperimentSpec",
    "ComparisonTable",
    "PlotBundle",
    "checkpoint_save",
    "checkpoint_load",
    "read_checkpoint",
    "run_cell",
    "run_experiment",
    "emit_plot_data",
    "evaluate_checkpoint",
]
