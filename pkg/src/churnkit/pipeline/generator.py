"""Synthetic month-by-month customer extracts with planted churn drivers.

Churn comes from two sources. Most churners first form an *intent*: the
monthly entry probability is a nonlinear function of a latent dissatisfaction
level (an AR(1) process), an expiring promotion for price-sensitive
customers, and low credit. An intending customer leaves 1-3 months later and
meanwhile shows a signature in the usage fields: long shutdowns together
with arrears, or a collapse of traffic, calls and recharges relative to the
customer's plan. The remaining churn is uninformative random churn, with its
rate solved each month so the expected monthly churn equals ``churn_rate``.
A churned customer appears once more with ``churn_state_end = churned`` and
is gone afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ..dataset import (
    ACTIVE,
    CHURNED,
    COLUMNS,
    FIELD_BY_NAME,
    FIELDS,
    MONTH,
    NUMERIC,
    BINARY,
    DatasetError,
    add_months,
    days_in_month,
    month_path,
    month_range,
    months_between,
    parse_month,
)

CITY_TYPES = ("urban", "suburban", "rural")
MOBILE_TYPES = ("apple", "huawei", "samsung", "xiaomi", "oppo", "other")
FEE_PLANS = (16.0, 36.0, 56.0, 76.0, 106.0, 136.0, 166.0)
GROUND_TRUTH = "ground_truth.csv"
_BURN_IN = 4
# share of the churn rate that flows through the (observable) intent pipeline
_INTENT_SHARE = 0.6

# cells never blanked by missing-value injection
_NEVER_MISSING = {"customer_id", "month", "churn_state_end", "promotion_end_date"}
_ERROR_FIELDS = ("recharge_amount", "shutdown_days", "paid_call_duration", "arrears_amount")
INT_FIELDS = tuple(
    f.name for f in FIELDS
    if f.kind in (BINARY, MONTH) and f.name != "month"
) + ("credit", "incoming_call_count", "outgoing_call_count", "data_traffic_used_days",
     "shutdown_days", "sms_count")


@dataclass
class GeneratorSpec:
    n_customers: int = 20000
    months: list = field(default_factory=lambda: month_range(201505, 201512))
    churn_rate: float = 0.07
    seed: int = 0
    noise_level: float = 1.0
    missing_rate: float = 0.005
    error_rate: float = 0.001

    def validate(self) -> list[int]:
        months = [parse_month(m) for m in self.months]
        if len(months) < 5:
            raise DatasetError("need at least 5 months for one T-2..T+2 window")
        for a, b in zip(months, months[1:]):
            if months_between(a, b) != 1:
                raise DatasetError(f"months must be consecutive: {a} -> {b}")
        if not 0 <= self.churn_rate < 1:
            raise DatasetError("churn_rate must lie in [0, 1)")
        if self.n_customers < 1:
            raise DatasetError("n_customers must be positive")
        return months


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _calibrate(score, rate):
    """Intercept b with mean(sigmoid(b + score)) == rate, by bisection."""
    lo, hi = -40.0, 40.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if _sigmoid(mid + score).mean() < rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class _Population:
    def __init__(self, spec: GeneratorSpec, first_month: int, n_months: int):
        rng = np.random.default_rng([spec.seed, 0])
        n = spec.n_customers
        self.n = n
        self.ids = np.array([f"C{i:07d}" for i in range(n)], dtype=object)
        self.city = rng.choice(len(CITY_TYPES), size=n, p=[0.55, 0.3, 0.15])
        self.mobile = rng.choice(len(MOBILE_TYPES), size=n, p=[0.2, 0.25, 0.15, 0.15, 0.1, 0.15])
        self.credit = np.clip(np.round(rng.normal(60, 15, n)), 0, 100)
        self.join = np.array([add_months(first_month, -int(k)) for k in rng.integers(1, 97, n)])
        self.tdlte = rng.random(n) < 0.6
        self.fddlte = rng.random(n) < 0.7
        self.gat_roaming = rng.random(n) < 0.05
        self.prov_roaming = rng.random(n) < 0.15
        self.fee = rng.choice(FEE_PLANS, size=n, p=[0.1, 0.2, 0.25, 0.2, 0.12, 0.08, 0.05])
        # usage scales with the plan, so "low usage" only means something relative to the fee
        self.traffic_base = self.fee * 18.0 * rng.lognormal(0.0, 0.35, n)
        self.call_base = self.fee * 3.0 * rng.lognormal(0.0, 0.4, n)
        self.sms_base = rng.lognormal(2.5, 0.7, n)
        has_promo = rng.random(n) < 0.45
        end_offset = rng.integers(-_BURN_IN, n_months + 3, n)
        self.promo_end = np.where(
            has_promo, [add_months(first_month, int(k)) for k in end_offset], 0
        )
        self.price_sensitive = rng.random(n) < 0.4
        self.latent = rng.normal(0.0, 1.0, n)
        self.alive = np.ones(n, dtype=bool)
        self.intent = np.zeros(n, dtype=bool)
        self.due = np.zeros(n, dtype=np.int64)
        self.signature = np.zeros(n, dtype=np.int64)
        self.strength = np.zeros(n)


def _month_frame(pop: _Population, month: int, rng, noise: float, churned):
    n = pop.n
    days = days_in_month(month)
    u = np.maximum(pop.latent - 0.8, 0.0)
    disconnect = pop.intent & (pop.signature & 1 > 0)
    collapse = pop.intent & (pop.signature & 2 > 0)

    def jitter(scale):
        return rng.lognormal(0.0, scale * noise, n)

    promo_active = pop.promo_end >= month
    # weak signatures fade into the ordinary month-to-month noise
    s = pop.strength
    usage = np.where(collapse, 0.05 + 0.55 * (1.0 - s), np.exp(-0.4 * u))
    traffic = pop.traffic_base * usage * jitter(0.3)
    calls = pop.call_base * np.where(collapse, 0.2 + 0.5 * (1.0 - s), np.exp(-0.3 * u)) * jitter(0.35)

    short_stop = rng.random(n) < 0.15
    long_stop = rng.random(n) < 0.02
    shutdown = np.where(short_stop, rng.integers(1, 6, n), 0)
    shutdown = np.where(long_stop, rng.integers(6, 26, n), shutdown)
    shutdown = np.where(disconnect, np.round(2 + 14 * s + rng.uniform(0, 6, n)), shutdown)
    shutdown = np.clip(np.round(shutdown + noise * rng.normal(0, 0.5, n)), 0, days)

    late_payer = rng.random(n) < 0.06
    arrears = np.where(late_payer, rng.exponential(20.0 * noise, n), 0.0)
    arrears = np.where(disconnect, pop.fee * (0.1 + 1.2 * s) * rng.uniform(0.7, 1.3, n), arrears)
    arrears = arrears + np.where(u > 1.0, 10.0 * (u - 1.0), 0.0)

    recharge = pop.fee * np.where(collapse, rng.uniform(0.0, 0.3, n) + 0.6 * (1.0 - s), jitter(0.2))
    used_days = np.clip(np.round(days * (1 - np.exp(-traffic / 250.0)) - 0.5 * shutdown
                                 + rng.normal(0, 1.5 * noise, n)), 0, days)
    outgoing = np.round(calls / 3.0 * jitter(0.2))
    incoming = np.round(calls / 2.5 * jitter(0.3))
    intl = np.where(pop.gat_roaming, traffic * 0.05 * jitter(0.5), 0.0)
    over_voice = calls > 400
    low_calls = calls < 60
    low_traffic = traffic < 150
    low_sms = rng.poisson(pop.sms_base) < 5
    half_stop = (shutdown > 5) & (rng.random(n) < np.where(disconnect, 0.7, 0.3))

    return {
        "customer_id": pop.ids,
        "month": np.full(n, month),
        "city_type": np.array(CITY_TYPES, dtype=object)[pop.city],
        "credit": pop.credit,
        "join_month": pop.join,
        "gat_roaming_tag": pop.gat_roaming.astype(int),
        "half_stop_flag": half_stop.astype(int),
        "provincial_roaming_tag": pop.prov_roaming.astype(int),
        "two_low_user_tag": (low_calls & low_traffic).astype(int),
        "three_low_user_tag": (low_calls & low_traffic & low_sms).astype(int),
        "mobile_type": np.array(MOBILE_TYPES, dtype=object)[pop.mobile],
        "tdlte_tag": pop.tdlte.astype(int),
        "fddlte_tag": pop.fddlte.astype(int),
        "roaming_call_duration": np.where(pop.prov_roaming, calls * 0.1 * jitter(0.5), 0.0),
        "paid_call_duration": calls * 0.6,
        "over_product_voice_tag": over_voice.astype(int),
        "domestic_ld_call_duration": calls * 0.2 * jitter(0.3),
        "gat_intl_ld_call_duration": np.where(pop.gat_roaming, calls * 0.02 * jitter(0.5), 0.0),
        "non_gat_intl_ld_call_duration": np.where(rng.random(n) < 0.03, calls * 0.03, 0.0),
        "incoming_call_count": incoming,
        "outgoing_call_count": outgoing,
        "recharge_amount": recharge,
        "monthly_fee": pop.fee,
        "grant_amount": np.where(promo_active, pop.fee * 0.2, 0.0),
        "paid_data_traffic": traffic * 0.8,
        "free_data_traffic": traffic * 0.2 * jitter(0.3),
        "provincial_data_traffic": traffic * 0.7,
        "domestic_data_traffic": traffic * 0.25,
        "international_data_traffic": intl,
        "data_traffic_used_days": used_days,
        "arrears_amount": arrears,
        "over_product_voice_income": np.where(over_voice, (calls - 400) * 0.15, 0.0),
        "over_product_stream_income": np.where(traffic > 3000, (traffic - 3000) * 0.01, 0.0),
        "churn_state_start": np.full(n, ACTIVE, dtype=object),
        "churn_state_end": np.where(churned, CHURNED, ACTIVE).astype(object),
        "shutdown_days": shutdown,
        "sms_count": rng.poisson(pop.sms_base * np.where(collapse, 0.2 + 0.6 * (1.0 - s), 1.0)).astype(float),
        "promotion_tag": promo_active.astype(int),
        "promotion_end_date": np.where(promo_active, pop.promo_end, 0),
    }


def _to_frame(cols, keep, rng, spec: GeneratorSpec) -> pd.DataFrame:
    df = pd.DataFrame({k: np.asarray(v)[keep] for k, v in cols.items()}, columns=list(COLUMNS))
    m = len(df)
    for name in COLUMNS:
        if FIELD_BY_NAME[name].kind in (NUMERIC, BINARY):
            df[name] = df[name].astype(float).round(2)
    # draws happen for every field in a fixed order so output is seed-stable
    for name in _ERROR_FIELDS:
        bad = rng.random(m) < spec.error_rate
        df.loc[bad, name] = -df.loc[bad, name] - 1.0
    for name in COLUMNS:
        hole = rng.random(m) < spec.missing_rate
        if name in _NEVER_MISSING or not hole.any():
            continue
        if df[name].dtype == object:
            df.loc[hole, name] = None
        else:
            df[name] = df[name].astype(float)
            df.loc[hole, name] = np.nan
    df["promotion_end_date"] = df["promotion_end_date"].where(df["promotion_end_date"] > 0)
    for name in INT_FIELDS:
        df[name] = df[name].astype("Int64")
    return df


def _intent_score(pop: _Population, month: int) -> np.ndarray:
    r = np.maximum(pop.latent - 0.5, 0.0)
    expiring = (pop.promo_end == month) | (pop.promo_end == add_months(month, 1))
    return (1.6 * np.minimum(r, 2.5) ** 2
            + np.where(expiring & pop.price_sensitive, 3.0, 0.0)
            + 0.8 * (pop.credit < 35))


def generate_synthetic(spec: GeneratorSpec, out_dir) -> list[Path]:
    """Write ``customers_<YYYYMM>.csv`` for every month plus a ground-truth sidecar."""
    months = spec.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pop = _Population(spec, months[0], len(months))
    paths = []
    truth = []
    n = pop.n
    # a few unwritten lead-in months fill the intent pipeline
    for t in range(-_BURN_IN, len(months)):
        month = add_months(months[0], t)
        rng = np.random.default_rng([spec.seed, 1, t + _BURN_IN])
        alive = pop.alive
        n_alive = int(alive.sum())

        candidates = alive & ~pop.intent
        score = _intent_score(pop, month)
        if spec.churn_rate > 0 and candidates.any():
            b = _calibrate(score[candidates], _INTENT_SHARE * spec.churn_rate)
            p_intent = _sigmoid(b + score)
        else:
            p_intent = np.zeros(n)
        enter = candidates & (rng.random(n) < p_intent)
        delay = rng.integers(1, 4, n)
        sig = rng.choice([1, 2, 3], size=n, p=[0.45, 0.4, 0.15])
        pop.due = np.where(enter, [add_months(month, int(k)) for k in delay], pop.due)
        pop.signature = np.where(enter, sig, pop.signature)
        pop.strength = np.where(enter, rng.random(n), pop.strength)
        pop.intent = pop.intent | enter

        due_now = alive & pop.intent & (pop.due == month)
        others = alive & ~pop.intent
        need = spec.churn_rate * n_alive - due_now.sum()
        hazard = max(need, 0.0) / max(int(others.sum()), 1)
        random_churn = others & (rng.random(n) < hazard)
        churned = due_now | random_churn

        if t >= 0:
            cols = _month_frame(pop, month, rng, spec.noise_level, churned)
            df = _to_frame(cols, alive, rng, spec)
            path = month_path(out_dir, month)
            df.to_csv(path, index=False, lineterminator="\n", float_format="%.2f", na_rep="")
            paths.append(path)
            truth.append(pd.DataFrame({
                "month": month,
                "customer_id": pop.ids[alive],
                "latent_risk": np.round(pop.latent[alive], 6),
                # chance of forming an intent this month (0 once an intent exists)
                "intent_propensity": np.round(np.where(candidates, p_intent, 0.0)[alive], 6),
                "random_churn_hazard": np.round(np.where(others, hazard, 0.0)[alive], 6),
                "intent": pop.intent[alive].astype(int),
                "due_month": np.where(pop.intent, pop.due, 0)[alive],
                "signature": np.where(pop.intent, pop.signature, 0)[alive],
                "churned": churned[alive].astype(int),
            }))
        pop.alive = alive & ~churned
        pop.latent = 0.85 * pop.latent + 0.55 * rng.normal(0.0, 1.0, n)
    pd.concat(truth).to_csv(out_dir / GROUND_TRUTH, index=False, lineterminator="\n")
    return paths
