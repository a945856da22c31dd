"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also repeated in the terminal summary.
"""

import time
from contextlib import contextmanager

import numpy as np
from scipy.stats import binomtest

from mlcert.attack_verifier import attack_profile
from mlcert.bounds import (
    ProbabilityBounds,
    bounds_from_probabilities,
    clopper_pearson_lower,
    clopper_pearson_upper,
    estimate_bounds,
)
from mlcert.certifier import BASELINE, MULTIGUARD, NO_JOINT, binary_search_size, certified_radius, certify, \
    linear_scan_size
from mlcert.cli import main
from mlcert.evaluation import aggregate, default_r_grid
from mlcert.numerics import beta_quantile, gaussian_cdf, gaussian_quantile, regularized_incomplete_beta
from mlcert.sampler import SmoothingConfig, count_frequencies
from mlcert.synthetic_model import (
    SyntheticClassifier,
    exact_label_probabilities,
    exact_probability_bounds,
    partition_line,
    random_problem,
)

import oracles


@contextmanager
def criterion(log, number, title, budget=None):
    """Time the block and record one PASS/FAIL line; a blown time budget fails too."""
    start = time.perf_counter()
    state = {"detail": ""}
    try:
        yield state
    except BaseException as exc:
        line = f"criterion {number:02d} FAIL  {title} ({time.perf_counter() - start:.2f}s): {exc}".splitlines()[0]
        print(line)
        log.append(line)
        raise
    elapsed = time.perf_counter() - start
    ok = budget is None or elapsed < budget
    limit = f" / budget {budget:g}s" if budget is not None else ""
    line = f"criterion {number:02d} {'PASS' if ok else 'FAIL'}  {title} ({elapsed:.2f}s{limit}) {state['detail']}"
    print(line)
    log.append(line.rstrip())
    assert ok, f"runtime {elapsed:.2f}s exceeds {budget}s"


def exact_bounds(clf, x, sigma, gt, part=None):
    part = part or partition_line(clf)
    lo, hi = exact_probability_bounds(clf, x, sigma, part)
    return bounds_from_probabilities(lo, gt, clf.k_prime, hi)


def two_label_bounds(plow, pup):
    return ProbabilityBounds((0,), np.array([plow, 0.0]), np.array([1.0, pup]), 1)


def test_c01_two_class_reduction(acceptance_log):
    rng = np.random.default_rng(101)
    cases = []
    for _ in range(200):
        plow = float(rng.uniform(0.5, 0.999))
        # consistency with k'=1 means plow + pup <= 1 (see decisions ledger)
        pup = float(rng.uniform(0.001, 1 - plow))
        cases.append((plow, pup, float(rng.uniform(0.1, 2.0))))
    with criterion(acceptance_log, 1, "two-class closed-form radius, 200 cases, tol 1e-5", budget=1.0) as st:
        worst = 0.0
        for plow, pup, sigma in cases:
            R = certified_radius(two_label_bounds(plow, pup), 1, SmoothingConfig(sigma=sigma, k=1))
            want = sigma * (gaussian_quantile(plow) - gaussian_quantile(pup)) / 2
            worst = max(worst, abs(R - want))
        st["detail"] = f"max |error| = {worst:.2e}"
        assert worst <= 1e-5


def test_c02_soundness_oracle(acceptance_log):
    grid = default_r_grid()
    with criterion(acceptance_log, 2, "exact-bound soundness, 1000 instances x 41 radii", budget=120) as st:
        rng = np.random.default_rng(202)
        violations = checks = 0
        for _ in range(1000):
            clf, x, gt, k = random_problem(rng, 0.5)
            cfg = SmoothingConfig(sigma=0.5, k=k, k_prime=clf.k_prime)
            part = partition_line(clf)
            b = exact_bounds(clf, x, cfg.sigma, gt, part)
            for R, sw in zip(grid, attack_profile(clf, x, gt, cfg, grid, partition=part)):
                checks += 1
                violations += sw.worst_intersection < certify(b, R, cfg).certified_size
        st["detail"] = f"{violations} violations in {checks} checks"
        assert violations == 0


def test_c03_statistical_soundness(acceptance_log):
    grid = default_r_grid()
    alpha = 0.05
    with criterion(acceptance_log, 3, "Monte Carlo soundness, 500 runs, n=1000, alpha=0.05", budget=600) as st:
        rng = np.random.default_rng(303)
        bad_pairs = pairs = bad_runs = 0
        for run in range(500):
            clf, x, gt, k = random_problem(rng, 0.5)
            cfg = SmoothingConfig(sigma=0.5, n=1000, alpha=alpha, k=k, k_prime=clf.k_prime, seed=run)
            inst = count_frequencies(clf, [x], cfg, gt, f"run{run}")
            b = estimate_bounds(inst, alpha)
            hit = False
            for R, sw in zip(grid, attack_profile(clf, x, gt, cfg, grid)):
                pairs += 1
                if sw.worst_intersection < certify(b, R, cfg).certified_size:
                    bad_pairs += 1
                    hit = True
            bad_runs += hit
        p = binomtest(bad_pairs, pairs, alpha, alternative="greater").pvalue
        st["detail"] = (f"violating (instance, R) pairs {bad_pairs}/{pairs}, runs {bad_runs}/500, "
                        f"one-sided p = {p:.3g}")
        assert p > 0.01


def test_c04_clopper_pearson_coverage(acceptance_log):
    alpha = 0.05
    clf = SyntheticClassifier([[-1.0], [0.3], [1.7], [0.9], [0.0]], [0.4, -0.2, -1.1, 0.5, 0.6], 2)
    x, sigma, gt = 0.15, 0.5, (0, 3)
    p = exact_label_probabilities(clf, x, sigma)
    with criterion(acceptance_log, 4, "simultaneous coverage, 500 runs, alpha=0.05") as st:
        misses = 0
        for run in range(500):
            cfg = SmoothingConfig(sigma=sigma, n=1000, alpha=alpha, k_prime=2, k=2, seed=run)
            b = estimate_bounds(count_frequencies(clf, [x], cfg, gt, "cov"), alpha)
            covered = all(b.lower_all[j] <= p[j] for j in gt) and \
                all(b.upper_all[j] >= p[j] for j in range(clf.num_labels) if j not in gt)
            misses += not covered
        pval = binomtest(misses, 500, alpha, alternative="greater").pvalue
        st["detail"] = f"coverage {1 - misses / 500:.3f}, one-sided p = {pval:.3g}"
        assert pval > 0.01


def synthetic_dataset(count, seed, k=3):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        clf, x, gt, _ = random_problem(rng, 0.5, k_prime=1, k=k)
        out.append(count_frequencies(clf, [x], SmoothingConfig(n=1000, seed=seed, k=k), gt, f"d{i:04d}"))
    return out


def test_c05_ablation_dominance(acceptance_log):
    grid = default_r_grid()
    cfg = SmoothingConfig(k=3)
    with criterion(acceptance_log, 5, "joint terms dominate, 500 instances x 41 radii") as st:
        violations = strict = 0
        for inst in synthetic_dataset(500, 505):
            b = estimate_bounds(inst, cfg.alpha)
            for R in grid:
                joint = certify(b, R, cfg, MULTIGUARD).certified_size
                single = certify(b, R, cfg, NO_JOINT).certified_size
                violations += joint < single
                strict += joint > single
        st["detail"] = f"{violations} violations, {strict} strict improvements"
        assert violations == 0 and strict >= 1


def test_c06_baseline_gap(acceptance_log):
    # each member has two ground-truth labels of near-equal probability that take
    # turns winning on either side of a crossing, plus weaker competitors
    family = []
    for shift in np.linspace(-0.1, 0.1, 5):
        for third in (0.05, 0.1, 0.2):
            clf = SyntheticClassifier([[1.0], [-1.0], [0.0], [0.2]], [0.0, 0.0, third, -0.4], 1)
            family.append((clf, float(shift)))
    cfg = SmoothingConfig(k=2)
    grid = [R for R in default_r_grid() if R > 0]
    with criterion(acceptance_log, 6, "joint certificate recall beats per-label baseline") as st:
        results = []
        for i, (clf, x) in enumerate(family):
            inst = count_frequencies(clf, [x], cfg, (0, 1), f"fam{i}")
            b = estimate_bounds(inst, cfg.alpha)
            for R in grid:
                results.append(certify(b, R, cfg, MULTIGUARD, inst.id))
                results.append(certify(b, R, cfg, BASELINE, inst.id))
        rows = {(r.mode, r.R): r for r in aggregate(results)}
        gaps = [R for R in grid if rows[(MULTIGUARD, R)].certified_recall > rows[(BASELINE, R)].certified_recall]
        best = max(grid, key=lambda R: rows[(MULTIGUARD, R)].certified_recall - rows[(BASELINE, R)].certified_recall)
        st["detail"] = (f"gap at {len(gaps)} radii; at R={best:g} recall {rows[(MULTIGUARD, best)].certified_recall:.3f}"
                        f" vs {rows[(BASELINE, best)].certified_recall:.3f}")
        assert gaps


def random_bounds(rng):
    kp = int(rng.integers(1, 4))
    d = int(rng.integers(1, 7))
    m = int(rng.integers(1, 8))
    gen = rng.random
    lower = gen(d) ** float(rng.uniform(0.3, 3))
    upper = gen(m) ** float(rng.uniform(0.3, 3))
    lo = np.concatenate([lower, np.zeros(m)])
    hi = np.concatenate([np.ones(d), upper])
    b = ProbabilityBounds(tuple(range(d)), lo, hi, kp)
    return b, SmoothingConfig(sigma=float(rng.uniform(0.1, 2)), k_prime=kp, k=int(rng.integers(1, d + m + 1)))


def test_c07_binary_search_agrees(acceptance_log):
    rng = np.random.default_rng(707)
    with criterion(acceptance_log, 7, "binary search = linear scan, 10^4 bound vectors") as st:
        disagreements = 0
        for _ in range(10_000):
            b, cfg = random_bounds(rng)
            R = float(rng.uniform(0, 1.5))
            for joint in (True, False):
                disagreements += binary_search_size(b, R, cfg, joint) != linear_scan_size(b, R, cfg, joint)
        st["detail"] = f"{disagreements} disagreements"
        assert disagreements == 0


def test_c08_monotonicity(acceptance_log):
    rng = np.random.default_rng(808)
    grid = np.linspace(0, 2, 21)
    with criterion(acceptance_log, 8, "monotonicity suite, 3 x 10^3 cases") as st:
        e_bad = curve_bad = count_bad = 0
        for _ in range(1000):
            b, cfg = random_bounds(rng)
            for mode in (MULTIGUARD, NO_JOINT, BASELINE):
                sizes = [certify(b, R, cfg, mode).certified_size for R in grid]
                e_bad += any(x < y for x, y in zip(sizes, sizes[1:]))
        for case in range(1000):
            results = []
            for i in range(4):
                b, cfg = random_bounds(rng)
                results += [certify(b, R, cfg, MULTIGUARD, f"c{case}-{i}") for R in grid]
            rows = aggregate(results)
            for field in ("certified_precision", "certified_recall", "certified_f1"):
                vals = [getattr(r, field) for r in rows]
                curve_bad += any(x < y - 1e-15 for x, y in zip(vals, vals[1:]))
        for _ in range(1000):
            n = int(rng.integers(1, 5000))
            a, c = sorted(int(v) for v in rng.integers(0, n + 1, 2))
            level = float(10 ** rng.uniform(-6, -1))
            count_bad += clopper_pearson_lower(a, n, level) > clopper_pearson_lower(c, n, level)
            count_bad += clopper_pearson_upper(a, n, level) > clopper_pearson_upper(c, n, level)
        st["detail"] = f"e(R) {e_bad}, metric curves {curve_bad}, bounds in counts {count_bad} violations"
        assert e_bad == curve_bad == count_bad == 0


def test_c09_numerics(acceptance_log):
    rng = np.random.default_rng(909)
    with criterion(acceptance_log, 9, "numerics: round trip, duality, reference values") as st:
        ps = np.concatenate([10 ** rng.uniform(-9, 0, 5000), 1 - 10 ** rng.uniform(-9, 0, 5000)])
        ps = np.clip(ps, 1e-9, 1 - 1e-9)
        round_trip = max(abs(gaussian_cdf(gaussian_quantile(float(p))) - p) for p in ps)
        duality = 0.0
        for _ in range(2000):
            q = float(rng.uniform(1e-6, 1 - 1e-6))
            a, b = (float(10 ** rng.uniform(-0.3, 3.3)) for _ in range(2))
            duality = max(duality, abs(regularized_incomplete_beta(beta_quantile(q, a, b), a, b) - q))
        refs = [
            abs(gaussian_quantile(0.975) - oracles.normal_quantile(0.975)),
            abs(gaussian_quantile(0.975) - 1.959964),
            abs(gaussian_cdf(1.959964) - oracles.normal_cdf(1.959964)),
            abs(regularized_incomplete_beta(0.2, 3, 8) - oracles.incomplete_beta_quad(0.2, 3, 8)),
            abs(beta_quantile(0.05, 3, 8) - oracles.beta_quantile_bisect(0.05, 3, 8)),
        ]
        st["detail"] = f"round trip {round_trip:.1e}, duality {duality:.1e}, reference {max(refs):.1e}"
        assert round_trip <= 1e-9 and duality <= 1e-8 and max(refs) <= 1e-6


def test_c10_determinism(acceptance_log, tmp_path):
    with criterion(acceptance_log, 10, "sample/certify byte-identical across runs and threads") as st:
        assert main(["generate", "--num-instances", "12", "--seed", "10", "--out", str(tmp_path)]) == 0
        clf, data = str(tmp_path / "classifier.json"), str(tmp_path / "dataset.json")
        counts, results = [], []
        for i, workers in enumerate(["1", "1", "3", "8"]):
            c_out = tmp_path / f"counts{i}.txt"
            r_out = tmp_path / f"results{i}.csv"
            assert main(["sample", "--classifier", clf, "--dataset", data, "--n", "20000", "--seed", "77",
                         "--workers", workers, "--out", str(c_out)]) == 0
            # certify the first counts file each time so only the certify stage varies here
            src = tmp_path / "counts0.txt"
            assert main(["certify", "--counts", str(src), "--mode", "all", "--workers", workers,
                         "--out", str(r_out)]) == 0
            counts.append(c_out.read_bytes())
            results.append(r_out.read_bytes())
        st["detail"] = f"{len(set(counts))} distinct counts files, {len(set(results))} distinct results files"
        assert len(set(counts)) == 1 and len(set(results)) == 1
