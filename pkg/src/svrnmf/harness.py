"""Experiment orchestration: datasets, the reference optimum, runs, reports.

A benchmark run loads or generates one dataset, computes a shared
reference optimum f_star with a long HALS run (minimum over all
experiment seeds, cached to a sidecar file), then executes every
(solver, seed) pair, persisting one trace CSV each plus a summary table
and convergence figures.
"""

from __future__ import annotations

import hashlib
import logging
import math

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .accel import AccelConfig
from .batch import BatchConfig, hals_solve, hals_solve_traced, mu_batch_solve
from .dataio import (
    OutlierSpec,
    SyntheticSpec,
    gen_synthetic,
    inject_outliers,
    load_image_dir,
    load_matrix,
    normalization_projector,
    save_matrix,
    write_pgm,
)
from .model import FactorPair, ShapeError, require_nonneg_matrix
from .robust import rsvrmu_solve
from .stochastic import StochasticConfig, smu_solve, svrmu_solve
from .trace import ConvergenceTrace, optimality_gap  # noqa: F401  (re-export)

log = logging.getLogger(__name__)

SOLVER_NAMES = ("mu", "hals", "smu", "smu-acc", "svrmu", "svrmu-acc",
                "svrmu-minibatch", "rsvrmu")

# f_star protocol: cap HALS at this many sweeps regardless of the run budget.
FSTAR_MAX_ITERS = 1000
FSTAR_REL_TOL = 1e-10


class ConfigError(ValueError):
    """An experiment configuration violated its schema."""

    def __init__(self, key_path: str, message: str):
        super().__init__(f"{key_path}: {message}")
        self.key_path = key_path


@dataclass(frozen=True)
class DatasetConfig:
    kind: str                      # "synthetic" | "file" | "images"
    synthetic: SyntheticSpec | None = None
    outliers: OutlierSpec | None = None
    normalize_after_outliers: bool = False
    path: str | None = None
    image_dir: str | None = None
    image_width: int | None = None
    image_height: int | None = None
    image_max_level: int | None = None


@dataclass
class ExperimentConfig:
    """Everything a benchmark run needs; TOML is the on-disk form."""

    dataset: DatasetConfig
    rank: int
    epochs: int
    seeds: tuple[int, ...]
    outdir: Path
    solvers: dict[str, dict] = field(default_factory=dict)
    timing: str = "none"           # "none" keeps emitted traces bit-reproducible
    jobs: int = 1
    figures: bool = True

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigError("run.rank", f"must be >= 1, got {self.rank}")
        if self.epochs < 1:
            raise ConfigError("run.epochs", f"must be >= 1, got {self.epochs}")
        if not self.seeds:
            raise ConfigError("run.seeds", "at least one seed is required")
        if not self.solvers:
            raise ConfigError("solvers", "at least one solver is required")
        for name in self.solvers:
            if name not in SOLVER_NAMES:
                raise ConfigError(
                    f"solvers.{name}",
                    f"unknown solver; valid names: {', '.join(SOLVER_NAMES)}",
                )
        if self.timing not in ("none", "wall"):
            raise ConfigError("run.timing", f"must be 'none' or 'wall', got {self.timing!r}")
        if self.jobs < 1:
            raise ConfigError("run.jobs", f"must be >= 1, got {self.jobs}")
        self.outdir = Path(self.outdir)


def _require(section: dict, key: str, kind, key_path: str):
    if key not in section:
        raise ConfigError(key_path, "missing required key")
    value = section[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ConfigError(key_path, f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _parse_dataset(section: dict) -> DatasetConfig:
    kind = _require(section, "kind", str, "dataset.kind")
    outliers = None
    normalize_after = False
    if "outliers" in section:
        sub = section["outliers"]
        outliers = OutlierSpec(
            density=_require(sub, "density", float, "dataset.outliers.density"),
            low=_require(sub, "low", float, "dataset.outliers.low"),
            high=_require(sub, "high", float, "dataset.outliers.high"),
            seed=_require(sub, "seed", int, "dataset.outliers.seed"),
        )
        normalize_after = bool(sub.get("normalize", False))
    if kind == "synthetic":
        spec = SyntheticSpec(
            n_features=_require(section, "rows", int, "dataset.rows"),
            n_samples=_require(section, "cols", int, "dataset.cols"),
            rank=_require(section, "rank", int, "dataset.rank"),
            seed=_require(section, "seed", int, "dataset.seed"),
        )
        return DatasetConfig(kind=kind, synthetic=spec, outliers=outliers,
                             normalize_after_outliers=normalize_after)
    if kind == "file":
        return DatasetConfig(kind=kind, outliers=outliers,
                             normalize_after_outliers=normalize_after,
                             path=_require(section, "path", str, "dataset.path"))
    if kind == "images":
        return DatasetConfig(
            kind=kind, outliers=outliers,
            normalize_after_outliers=normalize_after,
            image_dir=_require(section, "dir", str, "dataset.dir"),
            image_width=_require(section, "width", int, "dataset.width"),
            image_height=_require(section, "height", int, "dataset.height"),
            image_max_level=_require(section, "max_level", int, "dataset.max_level"),
        )
    raise ConfigError("dataset.kind", f"unknown kind {kind!r}")


def load_experiment_config(path) -> ExperimentConfig:
    """Parse and validate a TOML benchmark configuration."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from None
    if "dataset" not in doc:
        raise ConfigError("dataset", "missing required section")
    if "run" not in doc:
        raise ConfigError("run", "missing required section")
    if "solvers" not in doc or not isinstance(doc["solvers"], dict) or not doc["solvers"]:
        raise ConfigError("solvers", "at least one [solvers.<name>] section is required")
    run = doc["run"]
    seeds = _require(run, "seeds", list, "run.seeds")
    if not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise ConfigError("run.seeds", "seeds must be integers")
    try:
        dataset = _parse_dataset(doc["dataset"])
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("dataset", str(exc)) from None
    return ExperimentConfig(
        dataset=dataset,
        rank=_require(run, "rank", int, "run.rank"),
        epochs=_require(run, "epochs", int, "run.epochs"),
        seeds=tuple(seeds),
        outdir=Path(_require(run, "outdir", str, "run.outdir")),
        solvers={name: dict(params) for name, params in doc["solvers"].items()},
        timing=run.get("timing", "none"),
        jobs=run.get("jobs", 1),
        figures=bool(run.get("figures", True)),
    )


def load_dataset(ds: DatasetConfig) -> np.ndarray:
    """Materialize the data matrix a config describes."""
    if ds.kind == "synthetic":
        V, _, _ = gen_synthetic(ds.synthetic)
    elif ds.kind == "file":
        V = load_matrix(ds.path)
    elif ds.kind == "images":
        V = load_image_dir(ds.image_dir, ds.image_width, ds.image_height,
                           ds.image_max_level)
    else:
        raise ConfigError("dataset.kind", f"unknown kind {ds.kind!r}")
    if ds.outliers is not None:
        V, _ = inject_outliers(V, ds.outliers)
        if ds.normalize_after_outliers:
            V = normalization_projector(V)
    return require_nonneg_matrix(V, "dataset")


# ---------------------------------------------------------------------------
# reference optimum


def dataset_digest(V: np.ndarray, rank: int, seeds, max_iters: int) -> str:
    """Digest identifying one f_star computation: data plus its protocol."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(V, dtype="<f8").tobytes())
    h.update(str((V.shape, rank, tuple(seeds), max_iters)).encode("ascii"))
    return h.hexdigest()[:16]


def fstar_iters(max_epochs: int) -> int:
    """Reference-run sweep budget: ten times the run budget, capped."""
    return min(FSTAR_MAX_ITERS, 10 * max_epochs)


def compute_f_star(V, rank: int, seeds, max_epochs: int,
                   cache_dir=None) -> tuple[float, int]:
    """Best HALS cost over all experiment seeds, with sidecar caching.

    The cache file <digest>.fstar holds the value and the sweep budget,
    one per line.
    """
    iters = fstar_iters(max_epochs)
    cache_path = None
    if cache_dir is not None:
        cache_path = Path(cache_dir) / f"{dataset_digest(V, rank, seeds, iters)}.fstar"
        if cache_path.exists():
            lines = cache_path.read_text(encoding="ascii").split()
            if len(lines) >= 2:
                log.info("f_star cache hit: %s", cache_path)
                return float(lines[0]), int(float(lines[1]))
    best = math.inf
    for seed in seeds:
        _, cost = hals_solve(V, rank, BatchConfig(max_iters=iters,
                                                  rel_tol=FSTAR_REL_TOL,
                                                  seed=seed))
        best = min(best, cost)
    log.info("f_star = %.6e over %d reference runs of %d sweeps", best, len(tuple(seeds)), iters)
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        cache_path.write_text(f"{best!r}\n{iters}\n", encoding="ascii")
    return best, iters


# ---------------------------------------------------------------------------
# solver registry


def run_solver(name: str, V, rank: int, epochs: int, seed: int, *,
               f_star: float = 0.0, timing: bool = True,
               params: dict | None = None):
    """Run one named solver; returns (factors, trace, residuals-or-None)."""
    if name not in SOLVER_NAMES:
        raise ValueError(
            f"unknown solver {name!r}; valid names: {', '.join(SOLVER_NAMES)}"
        )
    p = dict(params or {})
    if name in ("mu", "hals"):
        config = BatchConfig(max_iters=epochs, rel_tol=p.pop("rel_tol", 0.0),
                             seed=seed)
        if p:
            raise ValueError(f"unused parameters for {name}: {sorted(p)}")
        if name == "mu":
            factors, trace = mu_batch_solve(V, rank, config, f_star=f_star,
                                            timing=timing)
        else:
            factors, _, trace = hals_solve_traced(V, rank, config,
                                                  f_star=f_star, timing=timing)
        return factors, trace, None

    accel = None
    if name in ("smu-acc", "svrmu-acc"):
        accel = AccelConfig(beta=p.pop("beta", 0.5),
                            epsilon=p.pop("epsilon", 1e-3))
    batch_size = int(p.pop("batch_size", 1))
    if name == "svrmu-minibatch" and "batch_size" not in (params or {}):
        batch_size = max(1, V.shape[1] // 10)
    kwargs = {key: p.pop(key) for key in ("inner_iters", "alpha0", "decay")
              if key in p}
    config = StochasticConfig(epochs=epochs, batch_size=batch_size, seed=seed,
                              **kwargs)
    lam = p.pop("lam", 1.0) if name == "rsvrmu" else None
    if p:
        raise ValueError(f"unused parameters for {name}: {sorted(p)}")
    if name in ("smu", "smu-acc"):
        factors, trace = smu_solve(V, rank, config, accel=accel,
                                   f_star=f_star, timing=timing)
        return factors, trace, None
    if name in ("svrmu", "svrmu-acc", "svrmu-minibatch"):
        factors, trace = svrmu_solve(V, rank, config, accel=accel,
                                     f_star=f_star, timing=timing)
        return factors, trace, None
    factors, outliers, trace = rsvrmu_solve(V, rank, config, lam,
                                            f_star=f_star, timing=timing)
    return factors, trace, outliers.R


# ---------------------------------------------------------------------------
# experiment driver


@dataclass
class RunResult:
    solver: str
    seed: int
    trace: ConvergenceTrace | None
    factors: FactorPair | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class ExperimentResult:
    f_star: float
    runs: list[RunResult]
    trace_paths: dict[tuple[str, int], Path]
    summary_path: Path
    figure_paths: list[Path]


def trace_filename(solver: str, seed: int) -> str:
    return f"trace_{solver}_seed{seed}.csv"


def emit_trace(trace: ConvergenceTrace, path) -> None:
    trace.write_csv(path)


def _one_run(config: ExperimentConfig, V, f_star: float, solver: str,
             seed: int) -> RunResult:
    try:
        factors, trace, _ = run_solver(
            solver, V, config.rank, config.epochs, seed,
            f_star=f_star, timing=(config.timing == "wall"),
            params=config.solvers[solver],
        )
        return RunResult(solver, seed, trace, factors)
    except Exception as exc:  # isolate per-run failures
        log.error("run %s seed %d failed: %s", solver, seed, exc)
        return RunResult(solver, seed, None, None, error=str(exc))


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Execute every (solver, seed) pair and persist traces plus reports.

    f_star is computed once for the dataset and shared by all traces.
    A failing run is reported in the summary without aborting the rest.
    """
    V = load_dataset(config.dataset)
    outdir = config.outdir
    outdir.mkdir(parents=True, exist_ok=True)
    f_star, _ = compute_f_star(V, config.rank, config.seeds, config.epochs,
                               cache_dir=outdir)
    pairs = [(solver, seed) for solver in config.solvers for seed in config.seeds]
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            runs = list(pool.map(
                lambda pair: _one_run(config, V, f_star, *pair), pairs))
    else:
        runs = [_one_run(config, V, f_star, solver, seed) for solver, seed in pairs]

    trace_paths: dict[tuple[str, int], Path] = {}
    for run in runs:
        if run.ok:
            path = outdir / trace_filename(run.solver, run.seed)
            emit_trace(run.trace, path)
            trace_paths[(run.solver, run.seed)] = path

    summary_path = outdir / "summary.csv"
    _write_summary(summary_path, runs)

    figure_paths: list[Path] = []
    if config.figures:
        from .plots import plot_gap_curves  # deferred; pulls in matplotlib

        grouped: dict[str, list[ConvergenceTrace]] = {}
        for run in runs:
            if run.ok:
                grouped.setdefault(run.solver, []).append(run.trace)
        if grouped:
            fig = outdir / "gap_vs_gradients.png"
            plot_gap_curves(grouped, fig, x_axis="grad_count")
            figure_paths.append(fig)
            if config.timing == "wall":
                fig_t = outdir / "gap_vs_time.png"
                plot_gap_curves(grouped, fig_t, x_axis="wall_ms")
                figure_paths.append(fig_t)
    return ExperimentResult(f_star, runs, trace_paths, summary_path, figure_paths)


def _write_summary(path: Path, runs: list[RunResult]) -> None:
    lines = ["solver,seed,status,epochs,grad_count,final_cost,final_gap"]
    for run in runs:
        if run.ok:
            final = run.trace.final
            lines.append(
                f"{run.solver},{run.seed},ok,{final.epoch},{final.grad_count},"
                f"{final.cost!r},{final.optimality_gap!r}"
            )
        else:
            lines.append(f"{run.solver},{run.seed},failed,,,,")
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def format_summary(result: ExperimentResult) -> str:
    """Human-readable run table for the console."""
    rows = [f"{'solver':<18} {'seed':>6} {'status':<8} {'final gap':>14}"]
    for run in result.runs:
        if run.ok:
            rows.append(
                f"{run.solver:<18} {run.seed:>6} {'ok':<8} "
                f"{run.trace.final.optimality_gap:>14.6e}"
            )
        else:
            rows.append(f"{run.solver:<18} {run.seed:>6} {'failed':<8} {run.error}")
    rows.append(f"f_star = {result.f_star!r}")
    return "\n".join(rows)


# ---------------------------------------------------------------------------
# basis mosaics


def emit_basis_mosaic(W, tile_width: int, tile_height: int, path) -> None:
    """Tile the columns of W into one grayscale PGM image.

    Each basis column is reshaped to tile_height x tile_width and
    stretched to the full gray range on its own; a constant column
    renders black. Tiles fill a near-square grid left to right.
    """
    W = require_nonneg_matrix(W, "W")
    n_features, rank = W.shape
    if n_features != tile_width * tile_height:
        raise ShapeError(
            f"W has {n_features} rows but tiles are "
            f"{tile_width}x{tile_height} = {tile_width * tile_height}"
        )
    grid_cols = math.ceil(math.sqrt(rank))
    grid_rows = math.ceil(rank / grid_cols)
    canvas = np.zeros((grid_rows * tile_height, grid_cols * tile_width),
                      dtype=np.uint8)
    for i in range(rank):
        tile = W[:, i].reshape(tile_height, tile_width)
        lo, hi = float(tile.min()), float(tile.max())
        if hi > lo:
            gray = np.rint((tile - lo) / (hi - lo) * 255).astype(np.uint8)
        else:
            gray = np.zeros_like(tile, dtype=np.uint8)
        r, c = divmod(i, grid_cols)
        canvas[r * tile_height:(r + 1) * tile_height,
               c * tile_width:(c + 1) * tile_width] = gray
    write_pgm(path, canvas, maxval=255)


def save_factors(factors: FactorPair, prefix, residuals: np.ndarray | None = None):
    """Persist W/H (and optionally R) next to a common path prefix."""
    prefix = Path(prefix)
    paths = {
        "W": prefix.with_name(prefix.name + ".W.nnmf"),
        "H": prefix.with_name(prefix.name + ".H.nnmf"),
    }
    save_matrix(factors.W, paths["W"])
    save_matrix(factors.H, paths["H"])
    if residuals is not None:
        paths["R"] = prefix.with_name(prefix.name + ".R.nnmf")
        save_matrix(residuals, paths["R"])
    return paths
