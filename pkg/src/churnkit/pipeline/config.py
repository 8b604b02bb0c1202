"""Flat ``key = value`` suite configuration files.

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Example::

    data_dir = data/synthetic
    output_dir = results
    train_months = 201507, 201508, 201509
    methods = sampling          # or: classifiers, or none/rf, smote-tomek/rf, ...
    seed = 0
    trees = 100
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from ..dataset import parse_month
from ..sampler import SAMPLER_NAMES, SamplerConfig
from .experiment import (CLASSIFIER_METHODS, CLASSIFIER_NAMES, SAMPLING_METHODS, ClassifierConfig,
                         ExperimentError, suite_configs)


class ConfigError(ValueError):
    pass


def _months(text: str) -> list[int]:
    return [parse_month(v.strip()) for v in text.split(",") if v.strip()]


def _methods(text: str) -> list[tuple[str, str]]:
    text = text.strip()
    if text == "sampling":
        return list(SAMPLING_METHODS)
    if text == "classifiers":
        return list(CLASSIFIER_METHODS)
    out = []
    for item in text.split(","):
        sampler, sep, clf = item.strip().partition("/")
        if not sep:
            raise ConfigError(f"method {item.strip()!r} is not of the form sampler/classifier")
        sampler, clf = sampler.strip(), clf.strip()
        if sampler not in SAMPLER_NAMES:
            raise ConfigError(f"unknown sampler {sampler!r}")
        if clf not in CLASSIFIER_NAMES:
            raise ConfigError(f"unknown classifier {clf!r}")
        out.append((sampler, clf))
    return out


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_int(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else int(text)


PARSERS = {
    "data_dir": str,
    "output_dir": str,
    "train_months": _months,
    "test_months": _months,
    "methods": _methods,
    "seed": int,
    "k_smote": int,
    "m_borderline": int,
    "target_ratio": float,
    "trees": int,
    "features_per_split": _optional_int,
    "svm_c": float,
    "format": str,
    "n_jobs": int,
    "timings": _bool,
}


@dataclass
class SuiteSettings:
    data_dir: Optional[str] = None
    output_dir: str = "results"
    train_months: list = field(default_factory=lambda: [201507, 201508, 201509])
    test_months: Optional[list] = None
    methods: list = field(default_factory=lambda: list(SAMPLING_METHODS))
    seed: int = 0
    k_smote: int = 5
    m_borderline: int = 5
    target_ratio: float = 1.0
    trees: int = 100
    features_per_split: Optional[int] = None
    svm_c: float = 100.0
    format: str = "csv"
    n_jobs: int = 1
    timings: bool = True

    def experiments(self):
        if not self.data_dir:
            raise ConfigError("data_dir is not set (config file, --data, or CHURN_DATA_DIR)")
        try:
            return suite_configs(
                Path(self.data_dir), self.train_months, self.methods,
                test_months=self.test_months, seed=self.seed,
                sampler_config=SamplerConfig(self.k_smote, self.m_borderline, self.target_ratio, self.seed),
                classifier=ClassifierConfig(n_trees=self.trees, features_per_split=self.features_per_split,
                                            svm_c=self.svm_c),
                output_dir=Path(self.output_dir), record_timings=self.timings)
        except ExperimentError as exc:
            raise ConfigError(str(exc)) from exc


def parse_config(text: str, source: str = "<config>") -> dict:
    """Raw ``{key: parsed value}`` from config text; unknown or repeated keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        if key not in PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: {key!r} given twice")
        try:
            values[key] = PARSERS[key](value.strip())
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def load_settings(path=None, overrides: Mapping | None = None,
                  defaults: Mapping | None = None) -> SuiteSettings:
    """Settings from built-in defaults, then ``defaults``, then the file, then ``overrides``.

    ``None`` values in ``overrides`` mean "not given" and are skipped, so a
    command line can pass every flag unconditionally.
    """
    values = dict(defaults or {})
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
        values.update(parse_config(text, str(path)))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = set(values) - set(PARSERS)
    if unknown:
        raise ConfigError(f"unknown settings: {', '.join(sorted(unknown))}")
    return SuiteSettings(**values)
