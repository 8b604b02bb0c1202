"""Month-to-month experiments: load, clean, window, sample, train, evaluate.

Training statistics (cleaning fills, category levels, z-score parameters)
come from the training month only. The test window is encoded with them and
is never resampled.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..baselines import DEFAULT_C, C_GRID, LinearModel, train_linear_svm, train_logreg
from ..dataset import DatasetError, add_months, build_window_pair, load_months, parse_month
from ..forest import save_forest, train_forest
from ..metrics import PhaseTimings, confusion, evaluate, time_phase
from ..sampler import SAMPLER_NAMES, SamplerConfig, resample

log = logging.getLogger(__name__)

CLASSIFIER_NAMES = ("lr", "svm", "rf", "rf-cost-sensitive")

# the seven columns of the sampling comparison, in table order
SAMPLING_METHODS = (
    ("none", "rf"),
    ("random-under", "rf"),
    ("tomek-under", "rf"),
    ("random-over", "rf"),
    ("borderline-smote", "rf"),
    ("smote-tomek", "rf"),
    ("none", "rf-cost-sensitive"),
)
CLASSIFIER_METHODS = (("none", "lr"), ("none", "svm"), ("none", "rf"))

OK = "ok"
AVERAGE = "average"


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierConfig:
    name: str = "rf"
    n_trees: int = 100
    features_per_split: Optional[int] = None
    svm_c: float = DEFAULT_C
    svm_epochs: int = 200
    lr_max_iterations: int = 500
    n_jobs: int = 1

    def __post_init__(self):
        if self.name not in CLASSIFIER_NAMES:
            raise ExperimentError(f"unknown classifier {self.name!r}; expected one of {', '.join(CLASSIFIER_NAMES)}")
        if self.n_trees < 1:
            raise ExperimentError("n_trees must be >= 1")
        if not any(math.isclose(self.svm_c, c) for c in C_GRID):
            raise ExperimentError(f"svm C must be one of {', '.join(f'{c:g}' for c in C_GRID)}")


@dataclass(frozen=True)
class ExperimentConfig:
    data_dir: Path
    train_month: int
    test_month: int
    sampler: str = "none"
    sampler_config: SamplerConfig = SamplerConfig()
    classifier: ClassifierConfig = ClassifierConfig()
    seed: int = 0
    output_dir: Optional[Path] = None
    record_timings: bool = True

    def __post_init__(self):
        object.__setattr__(self, "data_dir", Path(self.data_dir))
        object.__setattr__(self, "train_month", parse_month(self.train_month))
        object.__setattr__(self, "test_month", parse_month(self.test_month))
        if self.output_dir is not None:
            object.__setattr__(self, "output_dir", Path(self.output_dir))
        if self.train_month == self.test_month:
            raise ExperimentError("test month must differ from the training month")
        if self.sampler not in SAMPLER_NAMES:
            raise ExperimentError(f"unknown sampler {self.sampler!r}; expected one of {', '.join(SAMPLER_NAMES)}")

    @property
    def experiment_id(self) -> str:
        return f"{self.train_month}-{self.test_month}-{self.sampler}-{self.classifier.name}-s{self.seed}"

    def required_months(self) -> list[int]:
        """T-2, T-1, T and T+2 for both windows, ascending."""
        months = set()
        for T in (self.train_month, self.test_month):
            months.update(add_months(T, k) for k in (-2, -1, 0, 2))
        return sorted(months)


@dataclass
class ReportRow:
    """One result row; metrics are None when undefined or when the run failed."""

    experiment_id: str
    train_month: str
    test_month: str
    sampler: str
    classifier: str
    precision: Optional[float] = None
    recall: Optional[float] = None
    tnr: Optional[float] = None
    f_measure: Optional[float] = None
    g_mean: Optional[float] = None
    sampling_s: Optional[float] = None
    train_s: Optional[float] = None
    total_s: Optional[float] = None
    status: str = OK
    # not part of the report file
    confusion: object = field(default=None, compare=False, repr=False)
    n_train: Optional[int] = field(default=None, compare=False)
    n_test: Optional[int] = field(default=None, compare=False)

    @property
    def method(self) -> tuple[str, str]:
        return self.sampler, self.classifier

    @property
    def ok(self) -> bool:
        return self.status in (OK, AVERAGE)


REPORT_FIELDS = tuple(f.name for f in dataclasses.fields(ReportRow))[:14]
METRIC_FIELDS = ("precision", "recall", "tnr", "f_measure", "g_mean")
TIMING_FIELDS = ("sampling_s", "train_s", "total_s")


class _WindowCache:
    """Month files and built windows shared by experiments over the same data."""

    def __init__(self):
        self.months = {}
        self.windows = {}

    def records(self, data_dir: Path, months):
        missing = [m for m in months if (data_dir, m) not in self.months]
        if missing:
            for m, df in load_months(data_dir, missing).items():
                self.months[(data_dir, m)] = df
        return {m: self.months[(data_dir, m)] for m in months}

    def windows_for(self, cfg: ExperimentConfig):
        key = (cfg.data_dir, cfg.train_month, cfg.test_month)
        if key not in self.windows:
            self.windows[key] = build_windows(self.records(cfg.data_dir, cfg.required_months()),
                                              cfg.train_month, cfg.test_month)
        return self.windows[key]


def build_windows(records_by_month, train_month: int, test_month: int):
    """Training and test windows; the test window reuses every training-fitted parameter."""
    train = build_window_pair(records_by_month, train_month)
    test = build_window_pair(records_by_month, test_month,
                             stats_source=records_by_month[train_month], encoding=train.encoding)
    return train, test


def _train(cfg: ExperimentConfig, data):
    c = cfg.classifier
    if c.name in ("rf", "rf-cost-sensitive"):
        weights = "balanced" if c.name == "rf-cost-sensitive" else "uniform"
        return train_forest(data, c.n_trees, weights=weights, features_per_split=c.features_per_split,
                            seed=cfg.seed, n_jobs=c.n_jobs)
    if c.name == "lr":
        return train_logreg(data, max_iterations=c.lr_max_iterations, seed=cfg.seed)
    return train_linear_svm(data, C=c.svm_c, epochs=c.svm_epochs, seed=cfg.seed)


def save_linear_model(model: LinearModel, path) -> None:
    lines = ["# churnkit linear v1", f"kind {model.kind}", f"C {model.C!r}",
             f"intercept {float(model.intercept)!r}"]
    lines += [f"w {float(v)!r}" for v in model.coefficients]
    Path(path).write_text("\n".join(lines) + "\n")


def model_path(cfg: ExperimentConfig) -> Optional[Path]:
    if cfg.output_dir is None:
        return None
    return cfg.output_dir / "models" / f"{cfg.experiment_id}.model"


def _save_model(cfg: ExperimentConfig, model) -> None:
    path = model_path(cfg)
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(model, LinearModel):
        save_linear_model(model, path)
    else:
        save_forest(model, path)


def _execute(cfg: ExperimentConfig, cache: _WindowCache) -> ReportRow:
    train, test = cache.windows_for(cfg)
    if len(np.unique(train.labels)) < 2:
        raise ExperimentError(f"training month {cfg.train_month} has a single class")
    timings = PhaseTimings()
    start = time.perf_counter()
    if cfg.sampler == "none":
        sampled = train
    else:
        scfg = dataclasses.replace(cfg.sampler_config, seed=cfg.seed)
        out, _ = time_phase("sampling", lambda: resample(cfg.sampler, train, scfg), timings)
        if out.warning:
            log.warning("%s: %s", cfg.experiment_id, out.warning)
        sampled = out.dataset
    model, _ = time_phase("training", lambda: _train(cfg, sampled), timings)
    timings.record("total", max(0.0, time.perf_counter() - start))
    _save_model(cfg, model)

    # the test window goes straight to prediction: no sampling, no refitting
    cm = confusion(model.predict(test.features), test.labels)
    m = evaluate(cm)
    row = ReportRow(cfg.experiment_id, str(cfg.train_month), str(cfg.test_month), cfg.sampler,
                    cfg.classifier.name, m.precision, m.recall, m.tnr, m.f_measure, m.g_mean,
                    confusion=cm, n_train=train.n, n_test=test.n)
    if cfg.record_timings:
        row.sampling_s = timings.sampling_seconds
        row.train_s = timings.training_seconds
        row.total_s = timings.total_seconds
    return row


def run_experiment(cfg: ExperimentConfig, *, cache: _WindowCache | None = None) -> ReportRow:
    """Run one train-month / test-month experiment and return its report row.

    Errors (missing months, a single-class training window) propagate. When
    ``cfg.output_dir`` is set the trained model is written to
    ``<output_dir>/models/<experiment_id>.model``.
    """
    return _execute(cfg, cache or _WindowCache())


def _failed_row(cfg: ExperimentConfig, exc: Exception) -> ReportRow:
    message = " ".join(str(exc).split()) or type(exc).__name__
    return ReportRow(cfg.experiment_id, str(cfg.train_month), str(cfg.test_month), cfg.sampler,
                     cfg.classifier.name, status=f"failed: {message}")


def _mean(values):
    if not values or any(v is None for v in values):
        return None
    return float(np.mean(values))


def average_rows(rows: Sequence[ReportRow]) -> list[ReportRow]:
    """One row per (sampler, classifier), averaging its successful runs.

    Methods keep their order of first appearance. A metric undefined in any
    contributing run is undefined in the average.
    """
    groups: dict[tuple[str, str], list[ReportRow]] = {}
    for row in rows:
        groups.setdefault(row.method, []).append(row)
    out = []
    for (sampler, classifier), members in groups.items():
        good = [r for r in members if r.status == OK]
        avg = ReportRow(f"average-{sampler}-{classifier}", AVERAGE, AVERAGE, sampler, classifier,
                        status=AVERAGE if good else "failed: no successful runs")
        for name in METRIC_FIELDS + TIMING_FIELDS:
            setattr(avg, name, _mean([getattr(r, name) for r in good]))
        out.append(avg)
    return out


def run_suite(cfgs: Sequence[ExperimentConfig], n_jobs: int = 1) -> list[ReportRow]:
    """Run every config, then append per-method averages.

    A failing run becomes a row whose status starts with ``failed:`` and the
    suite carries on. Rows are ordered by config index whatever ``n_jobs`` is.
    """
    if not cfgs:
        raise ExperimentError("a suite needs at least one experiment")
    cache = _WindowCache()

    def one(cfg):
        try:
            return _execute(cfg, cache)
        except (DatasetError, ExperimentError, ValueError, OSError) as exc:
            log.error("%s failed: %s", cfg.experiment_id, exc)
            return _failed_row(cfg, exc)

    if n_jobs == 1:
        rows = [one(cfg) for cfg in cfgs]
    else:
        # warm the shared cache serially so workers only read it
        for cfg in cfgs:
            try:
                cache.windows_for(cfg)
            except (DatasetError, ValueError, OSError):
                pass
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(one, cfgs))
    return rows + average_rows(rows)


def suite_configs(data_dir, train_months: Sequence[int], methods=SAMPLING_METHODS, *,
                  test_months: Sequence[int] | None = None, seed: int = 0,
                  sampler_config: SamplerConfig = SamplerConfig(),
                  classifier: ClassifierConfig = ClassifierConfig(),
                  output_dir=None, record_timings: bool = True) -> list[ExperimentConfig]:
    """The month-pair by method grid; each model is tested on the month after its training month by default."""
    train_months = [parse_month(m) for m in train_months]
    if test_months is None:
        test_months = [add_months(m, 1) for m in train_months]
    if len(test_months) != len(train_months):
        raise ExperimentError("train and test month lists differ in length")
    cfgs = []
    for sampler, clf in methods:
        for train_m, test_m in zip(train_months, test_months):
            cfgs.append(ExperimentConfig(
                data_dir, train_m, test_m, sampler, sampler_config,
                dataclasses.replace(classifier, name=clf), seed, output_dir, record_timings))
    return cfgs
