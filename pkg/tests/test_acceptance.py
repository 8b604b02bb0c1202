"""Acceptance criteria, one test each; every test prints a PASS/FAIL line before asserting."""

import dataclasses
import shutil
import time

import numpy as np
import pandas as pd
import pytest

from churnkit.baselines import log_likelihood, log_likelihood_gradient, train_logreg
from churnkit.dataset import LabeledDataset, load_months, month_path, month_range
from churnkit.forest import class_weights, predict, train_forest
from churnkit.metrics import ConfusionMatrix, confusion, evaluate
from churnkit.pipeline.experiment import (
    AVERAGE,
    ClassifierConfig,
    ExperimentConfig,
    build_windows,
    model_path,
    run_experiment,
    run_suite,
    suite_configs,
)
from churnkit.pipeline.generator import GeneratorSpec, generate_synthetic
from churnkit.pipeline.report import to_csv, to_markdown
from churnkit.sampler import SYNTHETIC, SamplerConfig, borderline_classify, knn, smote, tomek_links

from conftest import make_data, moons
from oracles import (
    borderline_oracle,
    central_difference,
    knn_oracle,
    on_segment,
    random_instance,
    sq_distances,
    tomek_oracle_fast,
)
from test_forest import stub_forest


def verdict(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {number} {title}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


# -- 1. metric formulas ----------------------------------------------------------------

# random forest rows of the base-classifier results: (precision, recall, TNR) -> (F, G)
RF_PUBLISHED = [
    ((0.8383, 0.3292, 0.9952), (0.473, 0.572)),
    ((0.7838, 0.3944, 0.9920), (0.525, 0.625)),
    ((0.7559, 0.3312, 0.9924), (0.461, 0.573)),
]


def counts_for(precision, recall, tnr, tp=10**7):
    """Integer confusion counts whose rates match the given triple to about 1e-7."""
    fn = round(tp * (1 - recall) / recall)
    fp = round(tp * (1 - precision) / precision)
    tn = round(fp * tnr / (1 - tnr))
    return ConfusionMatrix(tp, fp, fn, tn)


def test_criterion_1_metric_formulas(capsys):
    start = time.perf_counter()
    worst = 0.0
    for (p, r, tnr), (f, g) in RF_PUBLISHED:
        m = evaluate(counts_for(p, r, tnr))
        assert abs(m.precision - p) < 1e-6 and abs(m.recall - r) < 1e-6 and abs(m.tnr - tnr) < 1e-6
        worst = max(worst, abs(m.f_measure - f), abs(m.g_mean - g))
    elapsed = time.perf_counter() - start
    verdict(capsys, 1, "metric formulas", worst <= 1e-3 and elapsed < 1.0,
            f"max |error| {worst:.5f}, {elapsed:.3f}s")


# -- 2. sampler oracles ----------------------------------------------------------------------

def test_criterion_2_sampler_oracles(capsys):
    start = time.perf_counter()
    mismatches = []
    for seed in range(100):
        X, y = random_instance(seed)
        data = make_data(X, y)
        D = sq_distances(X)
        rng = np.random.default_rng(seed)
        for q in rng.integers(0, len(X), 5):
            k = int(rng.integers(1, 10))
            pool = np.union1d(np.flatnonzero(rng.random(len(X)) < 0.6), [0, 1])
            if knn(int(q), pool, X, k) != knn_oracle(D, q, pool, k):
                mismatches.append(("knn", seed))
        if tomek_links(data) != tomek_oracle_fast(X, y):
            mismatches.append(("tomek", seed))
        m = int(rng.integers(1, 8))
        ours, oracle = borderline_classify(data, m), borderline_oracle(X, y, m)
        if any(not np.array_equal(np.sort(ours[key]), oracle[key]) for key in oracle):
            mismatches.append(("borderline", seed))
    elapsed = time.perf_counter() - start
    verdict(capsys, 2, "sampler oracle equivalence", not mismatches and elapsed < 60,
            f"{len(mismatches)} mismatches on 100 instances, {elapsed:.1f}s")


# -- 3. SMOTE geometry ---------------------------------------------------------------------

def imbalanced(n_min, n_maj, d, seed):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(0, 1, (n_maj, d)), rng.normal(1.0, 1.5, (n_min, d))])
    return make_data(X, np.r_[np.zeros(n_maj, dtype=np.int64), np.ones(n_min, dtype=np.int64)])


def test_criterion_3_smote_geometry(capsys):
    off_segment = wrong_count = checked = 0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        data = imbalanced(int(rng.integers(5, 60)), int(rng.integers(100, 400)), int(rng.integers(1, 8)), seed)
        out = smote(data, SamplerConfig(k_smote=int(rng.integers(1, 8)), seed=seed))
        expected = int((data.labels == 0).sum() - (data.labels == 1).sum())
        synth = np.flatnonzero(out.origin == SYNTHETIC)
        wrong_count += len(synth) != expected
        X = out.dataset.features
        for i in synth:
            a, b = data.features[out.parent[i]], data.features[out.neighbor[i]]
            off_segment += not on_segment(a, b, X[i], tol=1e-9)
            checked += 1
    allocation = {}
    for M in (50, 250, 999):
        data = imbalanced(100, 100 + M, 3, M)
        out = smote(data)
        synth = out.origin == SYNTHETIC
        children = np.bincount(out.parent[synth], minlength=data.n)[data.labels == 1]
        m = M // 100
        good = (int(synth.sum()) == M and children.min() >= m
                and int((children == m + 1).sum()) == M - 100 * m)
        allocation[M] = out.info["per_seed"] if good else None
    ok = off_segment == 0 and wrong_count == 0 and allocation == {50: 0, 250: 2, 999: 9}
    verdict(capsys, 3, "SMOTE geometry", ok,
            f"{checked} synthetic rows, {off_segment} off segment, {wrong_count} bad counts, "
            f"base allocation per M {allocation}")


# -- 4. cost-sensitive contract ---------------------------------------------------------------

def test_criterion_4_cost_sensitive(capsys):
    y = np.r_[np.zeros(100), np.ones(10)]
    w = class_weights(y, "balanced")
    minority_first = (float(w[1]), float(w[0]))  # (minority, majority)
    cls, scores = predict(stub_forest(40, 60, w), np.zeros(1))  # 40 minority votes, 60 majority
    overturned = cls == 1 and predict(stub_forest(40, 60, (1.0, 1.0)), np.zeros(1))[0] == 0

    X, labels = moons(1100, seed=3)
    keep = (labels == 0) | (np.arange(len(labels)) % 10 == 0)  # roughly 1:10
    model = train_forest(make_data(X[keep], labels[keep]), n_trees=50, weights="balanced", seed=1)
    batch, _ = moons(1000, seed=4)
    base = model.predict(batch)
    changed = 0
    for c in (1e-3, 0.37, 2.0, 7.5, 1e4):
        scaled = dataclasses.replace(model, class_weights=model.class_weights * c)
        changed += int((scaled.predict(batch) != base).sum())
    ok = minority_first == (10.0, 1.0) and overturned and changed == 0
    verdict(capsys, 4, "cost-sensitive contract", ok,
            f"weights {minority_first}, 40:60 vote scores {scores.tolist()}, "
            f"{changed} predictions changed under scaling")


# -- 5. forest competence --------------------------------------------------------------------

def test_criterion_5_forest_competence(capsys, tmp_path):
    start = time.perf_counter()
    generate_synthetic(GeneratorSpec(n_customers=20000, months=month_range(201505, 201510),
                                     churn_rate=0.07, seed=0), tmp_path)
    records = load_months(tmp_path, month_range(201505, 201510))
    train, test = build_windows(records, 201507, 201508)

    def g(model):
        return evaluate(confusion(model.predict(test.features), test.labels)).g_mean or 0.0

    rf = g(train_forest(train, n_trees=100, seed=0))
    lr = g(train_logreg(train))
    shuffled = np.random.default_rng(0).permutation(train.labels)
    control = g(train_forest(LabeledDataset(train.features, shuffled), n_trees=100, seed=0))
    X, y = moons(2000, seed=0)
    Xt, yt = moons(1000, seed=1)
    accuracy = float((train_forest(make_data(X, y), seed=0).predict(Xt) == yt).mean())
    elapsed = time.perf_counter() - start
    ok = rf > lr and rf > control and accuracy >= 0.90 and elapsed < 120
    verdict(capsys, 5, "forest competence", ok,
            f"G-mean RF {rf:.3f}, LR {lr:.3f}, permuted {control:.3f}; moons accuracy {accuracy:.3f}; "
            f"{elapsed:.0f}s")


# -- 6. trend reproduction ----------------------------------------------------------------------

TREND_SEEDS = range(5)


@pytest.mark.slow
def test_criterion_6_trends(capsys, tmp_path):
    start = time.perf_counter()
    hits = {"random-under raises recall": 0, "borderline-smote raises recall": 0,
            "smote-tomek raises recall": 0, "borderline-smote precision above random-under": 0,
            "smote-tomek precision above random-under": 0, "no-sampling precision is the maximum": 0}
    for seed in TREND_SEEDS:
        data = tmp_path / f"s{seed}"
        generate_synthetic(GeneratorSpec(n_customers=6000, months=month_range(201505, 201512), seed=seed), data)
        rows = run_suite(suite_configs(data, [201507, 201508, 201509], seed=seed))
        avg = {r.sampler if r.classifier == "rf" else "cost-sensitive": r
               for r in rows if r.train_month == AVERAGE}
        none = avg["none"]
        hits["random-under raises recall"] += avg["random-under"].recall > none.recall
        hits["borderline-smote raises recall"] += avg["borderline-smote"].recall > none.recall
        hits["smote-tomek raises recall"] += avg["smote-tomek"].recall > none.recall
        hits["borderline-smote precision above random-under"] += (
            avg["borderline-smote"].precision > avg["random-under"].precision)
        hits["smote-tomek precision above random-under"] += (
            avg["smote-tomek"].precision > avg["random-under"].precision)
        hits["no-sampling precision is the maximum"] += all(
            none.precision >= r.precision for r in avg.values())
    elapsed = time.perf_counter() - start
    ok = all(v >= 4 for v in hits.values()) and elapsed < 15 * 60
    detail = "; ".join(f"{k} {v}/5" for k, v in hits.items())
    verdict(capsys, 6, "trend reproduction", ok, f"{detail}; {elapsed:.0f}s")


# -- 7. determinism and leakage -----------------------------------------------------------------

def test_criterion_7_determinism_and_leakage(capsys, small_corpus, tmp_path):
    def suite(out):
        cfgs = suite_configs(small_corpus, [201507, 201508], [("none", "rf"), ("smote", "rf"), ("none", "lr")],
                             classifier=ClassifierConfig(n_trees=20), output_dir=out, record_timings=False)
        rows = run_suite(cfgs)
        return to_csv(rows).encode(), to_markdown(rows).encode()

    identical_reports = suite(tmp_path / "a") == suite(tmp_path / "b")
    identical_models = all(
        (tmp_path / "a" / "models" / p.name).read_bytes() == p.read_bytes()
        for p in (tmp_path / "b" / "models").iterdir())

    # perturb every numeric value of the test month; the training window never reads it
    perturbed = tmp_path / "perturbed"
    shutil.copytree(small_corpus, perturbed)
    path = month_path(perturbed, 201508)
    df = pd.read_csv(path, dtype={"customer_id": str})
    rng = np.random.default_rng(0)
    for col in ("credit", "recharge_amount", "incoming_call_count", "outgoing_call_count", "shutdown_days"):
        df[col] = (df[col] * rng.uniform(0.5, 1.5, len(df))).round(2)
    df.to_csv(path, index=False, lineterminator="\n")
    saved = []
    for corpus, out in ((small_corpus, tmp_path / "m1"), (perturbed, tmp_path / "m2")):
        cfg = ExperimentConfig(corpus, 201507, 201508, "smote-tomek", classifier=ClassifierConfig(n_trees=20),
                               output_dir=out, record_timings=False)
        run_experiment(cfg)
        saved.append(model_path(cfg).read_bytes())
    windows = [build_windows(load_months(c, range_), 201507, 201508)
               for c, range_ in ((small_corpus, month_range(201505, 201510)), (perturbed, month_range(201505, 201510)))]
    assert np.array_equal(windows[0][0].features, windows[1][0].features)
    assert not np.array_equal(windows[0][1].features, windows[1][1].features)  # the perturbation bites
    ok = identical_reports and identical_models and saved[0] == saved[1]
    verdict(capsys, 7, "determinism and leakage", ok,
            f"reports identical {identical_reports}, models identical {identical_models}, "
            f"model unchanged by test-month perturbation {saved[0] == saved[1]}")


# -- 8. gradient checks ----------------------------------------------------------------------------

def test_criterion_8_gradient_checks(capsys):
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n, d = int(rng.integers(5, 40)), int(rng.integers(1, 7))
        X = rng.normal(size=(n, d))
        y = (rng.random(n) < 0.4).astype(float)
        theta = rng.normal(size=d + 1)

        def f(v):
            return log_likelihood(v[:d], v[d], X, y)

        gw, gb = log_likelihood_gradient(theta[:d], theta[d], X, y)
        analytic = np.r_[gw, gb]
        numeric = central_difference(f, theta)
        worst = max(worst, np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric))
    verdict(capsys, 8, "LR gradient checks", worst <= 1e-5, f"max relative error {worst:.2e}")
