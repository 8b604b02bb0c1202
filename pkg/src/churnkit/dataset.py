"""Customer schema, CSV ingestion, cleaning, encoding and the T -> T+2 window join."""

from __future__ import annotations

import calendar
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

NUMERIC = "numeric"
BINARY = "binary"
CATEGORICAL = "categorical"
MONTH = "month"
STATE = "state"
KEY = "key"

ACTIVE = "active"
CHURNED = "churned"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Field:
    name: str
    kind: str
    group: str
    nonnegative: bool = False


def _numeric(name, group):
    return Field(name, NUMERIC, group, nonnegative=True)


def _tag(name, group):
    return Field(name, BINARY, group)


# One customer-month record. Column names double as the CSV header.
FIELDS: tuple[Field, ...] = (
    Field("customer_id", KEY, "identity"),
    Field("month", KEY, "identity"),
    # customer profile
    Field("city_type", CATEGORICAL, "profile"),
    _numeric("credit", "profile"),
    Field("join_month", MONTH, "profile"),
    _tag("gat_roaming_tag", "profile"),
    _tag("half_stop_flag", "profile"),
    _tag("provincial_roaming_tag", "profile"),
    _tag("two_low_user_tag", "profile"),
    _tag("three_low_user_tag", "profile"),
    Field("mobile_type", CATEGORICAL, "profile"),
    _tag("tdlte_tag", "profile"),
    _tag("fddlte_tag", "profile"),
    # call details
    _numeric("roaming_call_duration", "call"),
    _numeric("paid_call_duration", "call"),
    _tag("over_product_voice_tag", "call"),
    _numeric("domestic_ld_call_duration", "call"),
    _numeric("gat_intl_ld_call_duration", "call"),
    _numeric("non_gat_intl_ld_call_duration", "call"),
    _numeric("incoming_call_count", "call"),
    _numeric("outgoing_call_count", "call"),
    # bill details
    _numeric("recharge_amount", "bill"),
    _numeric("monthly_fee", "bill"),
    _numeric("grant_amount", "bill"),
    # data traffic details
    _numeric("paid_data_traffic", "traffic"),
    _numeric("free_data_traffic", "traffic"),
    _numeric("provincial_data_traffic", "traffic"),
    _numeric("domestic_data_traffic", "traffic"),
    _numeric("international_data_traffic", "traffic"),
    _numeric("data_traffic_used_days", "traffic"),
    # month state
    _numeric("arrears_amount", "month_state"),
    _numeric("over_product_voice_income", "month_state"),
    _numeric("over_product_stream_income", "month_state"),
    Field("churn_state_start", STATE, "month_state"),
    Field("churn_state_end", STATE, "month_state"),
    # other information
    _numeric("shutdown_days", "other"),
    _numeric("sms_count", "other"),
    _tag("promotion_tag", "other"),
    Field("promotion_end_date", MONTH, "other"),
)

FIELD_BY_NAME = {f.name: f for f in FIELDS}
COLUMNS = tuple(f.name for f in FIELDS)
MANDATORY = ("customer_id", "month", "churn_state_end")
# An empty promotion_end_date means "no promotion", not a missing value.
OPTIONAL_ABSENT = ("promotion_end_date",)


# -- month arithmetic ---------------------------------------------------------

def parse_month(value) -> int:
    """Validate a YYYYMM key and return it as an int."""
    try:
        key = int(str(value).strip())
    except ValueError:
        raise DatasetError(f"invalid month key {value!r}") from None
    year, mon = divmod(key, 100)
    if not (1 <= mon <= 12 and 1000 <= year <= 9999):
        raise DatasetError(f"invalid month key {value!r}")
    return key


def month_index(key: int) -> int:
    year, mon = divmod(int(key), 100)
    return year * 12 + mon - 1


def month_from_index(idx: int) -> int:
    year, mon0 = divmod(int(idx), 12)
    return year * 100 + mon0 + 1


def add_months(key: int, n: int) -> int:
    return month_from_index(month_index(key) + n)


def months_between(start: int, end: int) -> int:
    """Signed month count from ``start`` to ``end`` (end - start)."""
    return month_index(end) - month_index(start)


def days_in_month(key: int) -> int:
    year, mon = divmod(int(key), 100)
    return calendar.monthrange(year, mon)[1]


def month_range(first: int, last: int) -> list[int]:
    first, last = parse_month(first), parse_month(last)
    if last < first:
        raise DatasetError(f"month range {first}:{last} is empty")
    return [add_months(first, i) for i in range(months_between(first, last) + 1)]


# -- ingestion ----------------------------------------------------------------

def _month_keys(col: pd.Series) -> np.ndarray:
    """Vectorized YYYYMM parse; anything invalid becomes NaN."""
    keys = pd.to_numeric(col, errors="coerce").to_numpy(dtype=float)
    mon = np.mod(keys, 100)
    year = np.floor_divide(keys, 100)
    ok = (keys == np.floor(keys)) & (mon >= 1) & (mon <= 12) & (year >= 1000) & (year <= 9999)
    return np.where(ok, keys, np.nan)


def load_csv(path) -> pd.DataFrame:
    """Read one month file into a frame with one column per schema field.

    Unparseable or empty cells become missing markers (NaN for numeric and
    month fields, None for categorical and state fields). Columns absent from
    the header are added as entirely missing unless they are mandatory.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"missing file: {path}")
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    raw.columns = [c.strip() for c in raw.columns]
    missing = [c for c in MANDATORY if c not in raw.columns]
    if missing:
        raise DatasetError(f"{path.name}: missing mandatory columns {missing}")

    out = {}
    n = len(raw)
    for f in FIELDS:
        if f.name not in raw.columns:
            out[f.name] = np.full(n, np.nan) if f.kind in (NUMERIC, BINARY, MONTH) else [None] * n
            continue
        col = raw[f.name]
        if f.kind in (KEY, CATEGORICAL, STATE):
            col = col.str.strip()
        if f.name == "customer_id":
            if (col == "").any():
                raise DatasetError(f"{path.name}: empty customer_id")
            out[f.name] = col.to_numpy(dtype=object)
        elif f.name == "month":
            keys = _month_keys(col)
            if np.isnan(keys).any():
                bad = col[np.isnan(keys)].iloc[0]
                raise DatasetError(f"{path.name}: invalid month key {bad!r}")
            out[f.name] = keys.astype(np.int64)
        elif f.kind in (NUMERIC, BINARY):
            out[f.name] = pd.to_numeric(col, errors="coerce").to_numpy(dtype=float)
        elif f.kind == MONTH:
            out[f.name] = _month_keys(col)
        elif f.kind == STATE:
            low = col.str.lower()
            out[f.name] = [v if v in (ACTIVE, CHURNED) else None for v in low]
        else:
            out[f.name] = [v if v else None for v in col]
    df = pd.DataFrame(out, columns=list(COLUMNS))
    dup = df.duplicated(["customer_id", "month"])
    if dup.any():
        first = df.loc[dup, ["customer_id", "month"]].iloc[0].tolist()
        raise DatasetError(f"{path.name}: duplicate (customer_id, month) pair {first}")
    return df


def month_path(data_dir, month: int) -> Path:
    return Path(data_dir) / f"customers_{int(month)}.csv"


def load_months(data_dir, months: Sequence[int]) -> dict[int, pd.DataFrame]:
    return {int(m): load_csv(month_path(data_dir, m)) for m in sorted(set(months))}


# -- cleaning -----------------------------------------------------------------

@dataclass
class CleaningLog:
    imputed: Counter = field(default_factory=Counter)
    clamped: Counter = field(default_factory=Counter)

    def __bool__(self):
        return bool(+self.imputed) or bool(+self.clamped)


def _fill_value(f: Field, source: pd.Series):
    values = source.dropna()
    if f.kind == NUMERIC:
        return float(np.median(values.to_numpy(dtype=float))) if len(values) else None
    if f.kind == MONTH:
        if not len(values):
            return None
        idx = np.median([month_index(v) for v in values])
        return float(month_from_index(int(np.floor(idx))))
    if not len(values):
        return None
    # mode; ties go to the smallest value
    counts = values.value_counts()
    top = counts[counts == counts.max()].index
    return sorted(top)[0]


def clean(records: pd.DataFrame, stats_source: pd.DataFrame) -> tuple[pd.DataFrame, CleaningLog]:
    """Impute nulls and clamp erroneous values.

    Numeric and month fields are filled with the median over ``stats_source``,
    categorical, binary and state fields with its mode. Negative values in
    nonnegative fields are clamped to 0, and ``data_traffic_used_days`` is
    capped at the length of the record's month.
    """
    if stats_source is None or len(stats_source) == 0:
        raise DatasetError("stats_source is empty")
    out = records.copy()
    log = CleaningLog()
    for f in FIELDS:
        if f.kind == KEY or f.name in OPTIONAL_ABSENT:
            continue
        col = out[f.name]
        nulls = col.isna()
        if nulls.any():
            fill = _fill_value(f, stats_source[f.name])
            if fill is None:
                raise DatasetError(f"field {f.name!r} is entirely null in stats_source")
            out.loc[nulls, f.name] = fill
            log.imputed[f.name] += int(nulls.sum())
        if f.nonnegative:
            neg = out[f.name].to_numpy(dtype=float) < 0
            if neg.any():
                out.loc[neg, f.name] = 0.0
                log.clamped[f.name] += int(neg.sum())
    lengths = {m: days_in_month(m) for m in out["month"].unique()}
    cap = out["month"].map(lengths).to_numpy(dtype=float)
    used = out["data_traffic_used_days"].to_numpy(dtype=float)
    over = used > cap
    if over.any():
        out.loc[over, "data_traffic_used_days"] = cap[over]
        log.clamped["data_traffic_used_days"] += int(over.sum())
    return out, log


# -- eligibility and windowing --------------------------------------------------

def eligibility_filter(records_by_month: Mapping[int, pd.DataFrame], T: int) -> set[str]:
    """Customers present and active at the end of each of months T-2, T-1, T."""
    months = [add_months(T, -2), add_months(T, -1), int(T)]
    absent = [m for m in months if m not in records_by_month]
    if absent:
        raise DatasetError(f"eligibility for {T} needs months {absent}")
    eligible = None
    for m in months:
        df = records_by_month[m]
        active = set(df.loc[df["churn_state_end"] == ACTIVE, "customer_id"])
        eligible = active if eligible is None else eligible & active
    return eligible


@dataclass(frozen=True)
class FeatureName:
    source: str
    encoding: str  # numeric | binary | state | one-hot | month-offset | indicator
    level: str | None = None

    def __str__(self):
        base = f"{self.source}={self.level}" if self.level is not None else self.source
        return f"{base} [{self.encoding}, standardized]"


@dataclass
class FeatureEncoding:
    """Everything fitted on the training month: category levels and z-score params."""

    levels: dict[str, tuple[str, ...]]
    feature_names: list[FeatureName]
    mean: np.ndarray
    std: np.ndarray


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list = field(default_factory=list)
    encoding: FeatureEncoding | None = None
    customer_ids: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise DatasetError("features must be n x d with one label per row")
        if not np.isin(self.labels, (0, 1)).all():
            raise DatasetError("labels must be 0 or 1")
        if not np.isfinite(self.features).all():
            raise DatasetError("features contain missing or non-finite values")

    @property
    def standardization_params(self):
        if self.encoding is None:
            return None
        return self.encoding.mean, self.encoding.std

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> tuple[int, int]:
        pos = int(self.labels.sum())
        return self.n - pos, pos

    def subset(self, rows) -> "LabeledDataset":
        rows = np.asarray(rows, dtype=np.int64)
        ids = None if self.customer_ids is None else self.customer_ids[rows]
        return LabeledDataset(self.features[rows], self.labels[rows], self.feature_names,
                              self.encoding, ids)


def _raw_columns(records: pd.DataFrame, T: int, levels: Mapping[str, tuple[str, ...]]):
    cols, names = [], []
    for f in FIELDS:
        if f.kind == KEY:
            continue
        col = records[f.name]
        if f.kind in (NUMERIC, BINARY):
            cols.append(col.to_numpy(dtype=float))
            names.append(FeatureName(f.name, f.kind))
        elif f.kind == STATE:
            cols.append((col == CHURNED).to_numpy(dtype=float))
            names.append(FeatureName(f.name, "state"))
        elif f.kind == CATEGORICAL:
            values = col.to_numpy(dtype=object)
            for level in levels[f.name]:
                cols.append((values == level).astype(float))
                names.append(FeatureName(f.name, "one-hot", level))
        elif f.kind == MONTH:
            raw = col.to_numpy(dtype=float)
            present = ~np.isnan(raw)
            offset = np.zeros(len(raw))
            offset[present] = [months_between(T, int(v)) for v in raw[present]]
            cols.append(offset)
            names.append(FeatureName(f.name, "month-offset"))
            if f.name in OPTIONAL_ABSENT:
                cols.append(present.astype(float))
                names.append(FeatureName(f.name, "indicator", "present"))
    X = np.column_stack(cols) if cols else np.zeros((len(records), 0))
    return X, names


def encode_features(records: pd.DataFrame, T: int,
                    params: FeatureEncoding | None = None) -> tuple[np.ndarray, FeatureEncoding]:
    """Turn cleaned records into a standardized numeric matrix.

    Binary tags become a single 0/1 column, categorical fields one column per
    training level (unseen levels encode as all zeros), month fields become
    signed offsets from ``T``; an absent promotion date gets offset 0 plus a
    presence indicator. Every column is then z-scored with ``params`` or, when
    ``params`` is None, with statistics fitted here. Zero-variance columns
    are emitted as 0.
    """
    T = parse_month(T)
    if params is None:
        levels = {
            f.name: tuple(sorted(set(records[f.name].dropna())))
            for f in FIELDS if f.kind == CATEGORICAL
        }
    else:
        levels = params.levels
    X, names = _raw_columns(records, T, levels)
    if params is None:
        mean = X.mean(axis=0) if len(X) else np.zeros(X.shape[1])
        std = X.std(axis=0) if len(X) else np.zeros(X.shape[1])
        params = FeatureEncoding(levels, names, mean, std)
    elif X.shape[1] != len(params.mean):
        raise DatasetError("encoding width differs from the fitted parameters")
    safe = np.where(params.std > 0, params.std, 1.0)
    Z = np.where(params.std > 0, (X - params.mean) / safe, 0.0)
    return Z, params


def build_window_pair(records_by_month: Mapping[int, pd.DataFrame], T: int, *,
                      stats_source: pd.DataFrame | None = None,
                      encoding: FeatureEncoding | None = None) -> LabeledDataset:
    """Join month-T features with the churn state at the end of month T+2.

    Only eligible customers (see :func:`eligibility_filter`) are kept. The
    label is 1 when the customer's T+2 record says churned or when the
    customer no longer appears in the T+2 file. Month T+1 is never read.

    ``stats_source`` (cleaning statistics) defaults to the month-T records and
    ``encoding`` defaults to one fitted on this window; pass the training
    window's values when building a test window.
    """
    T = parse_month(T)
    outcome_month = add_months(T, 2)
    if outcome_month not in records_by_month:
        raise DatasetError(f"outcome month {outcome_month} is missing")
    eligible = eligibility_filter(records_by_month, T)
    current = records_by_month[T]
    current = current[current["customer_id"].isin(eligible)]
    current = current.sort_values("customer_id", kind="mergesort").reset_index(drop=True)
    if stats_source is None:
        stats_source = records_by_month[T]
    cleaned, _ = clean(current, stats_source)
    X, encoding = encode_features(cleaned, T, encoding)

    outcome = records_by_month[outcome_month]
    state = dict(zip(outcome["customer_id"], outcome["churn_state_end"]))
    labels = np.array(
        [1 if cid not in state or state[cid] == CHURNED else 0 for cid in cleaned["customer_id"]],
        dtype=np.int64,
    )
    return LabeledDataset(X, labels, list(encoding.feature_names), encoding,
                          cleaned["customer_id"].to_numpy(dtype=object))
