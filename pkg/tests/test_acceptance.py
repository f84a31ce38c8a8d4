"""Acceptance checks, one test per criterion; each prints a PASS/FAIL line."""
import math
import time

import numpy as np
from scipy.stats import hypergeom

from attrition_ri import (
    AttritionError,
    Dataset,
    DeltaHSpec,
    DesignSpec,
    QuantileHypothesis,
    StatConfig,
    band_observed_subsample,
    build_null,
    delta_H,
    invert_constant_ci,
    prediction_band,
    quantile_test,
    restrict_observed,
    sharp_test,
    sharp_test_subsample,
    statistic,
    tail_prob,
    two_step_test,
    upper_conf_total_m0,
    worst_case,
)
from attrition_ri.oracle import (
    brute_force_null,
    brute_force_quantile_worst,
    brute_force_subsample_quantile_worst,
    brute_force_worst_statistic,
    random_tiny_dataset,
)
from attrition_ri.quantiles import subsample_quantile_test
from attrition_ri.simulate import SimSpec, run_experiment

import conftest
from conftest import ALL_CONFIGS
from tiny import assignments, covered, mar_configurations, observe, population

INF = math.inf
ALPHAS = (0.05, 0.1, 0.25)


def record(number, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def within(value, target, tol):
    return abs(value - target) <= tol + 1e-12


# 1. size of worst-case and naive tests at desk scale


def test_type1_error_reproduction():
    start = time.time()
    common = dict(n=500, n1=250, reps=2000, alpha=0.1, seed=20240611, stats=["wilcoxon"])
    thr = run_experiment("type1", SimSpec(missing="threshold", p=0.95, q=0.05, **common),
                         ["worst_y0|wilcoxon", "composite_b=inf|wilcoxon", "naive|wilcoxon"])
    rnd = run_experiment("type1", SimSpec(missing="random", p=0.95, **common), ["naive|wilcoxon"])
    mn = run_experiment("type1", SimSpec(missing="mn", p=0.05, q=0.03, **common), ["composite_b=-inf|wilcoxon"])
    worst = thr.row("worst_y0|wilcoxon")["rate"]
    comp = thr.row("composite_b=inf|wilcoxon")["rate"]
    naive = thr.row("naive|wilcoxon")["rate"]
    naive_mar = rnd.row("naive|wilcoxon")["rate"]
    mn_rate = mn.row("composite_b=-inf|wilcoxon")["rate"]
    checks = [
        within(worst, 0.0882, 0.02),
        comp == worst,
        naive >= 0.70,
        within(naive_mar, 0.0993, 0.02),
        within(mn_rate, 0.0871, 0.02),
    ]
    ok = record(
        1,
        all(checks),
        f"threshold worst-case {worst:.2%} (b=inf {comp:.2%}; target 8.82%+-2pp), naive {naive:.2%} (>=70%); "
        f"random naive {naive_mar:.2%} (9.93%+-2pp); mn b=-inf {mn_rate:.2%} (8.71%+-2pp); "
        f"missing {thr.missing_share:.2%}/{rnd.missing_share:.2%}/{mn.missing_share:.2%}; {time.time() - start:.0f}s",
    )
    assert ok


# 2. power spot rows


def test_power_spot_rows():
    start = time.time()
    common = dict(n=500, n1=250, reps=500, alpha=0.1, seed=20240611, sigma=2.0)
    thr = run_experiment("power", SimSpec(missing="threshold", p=0.95, q=0.05, stats=["power:6", "wilcoxon"], **common),
                         ["quantile|power:6", "quantile|wilcoxon"])
    mn = run_experiment("power", SimSpec(missing="mn", p=0.05, q=0.03, stats=["stephenson:10"], **common),
                        ["quantile|stephenson:10"])
    mw6 = thr.row("quantile|power:6")["rate"]
    wil = thr.row("quantile|wilcoxon")["rate"]
    st10 = mn.row("quantile|stephenson:10")["rate"]
    checks = [within(mw6, 0.767, 0.06), wil <= 0.02, within(st10, 0.977, 0.04)]
    ok = record(
        2,
        all(checks),
        f"threshold sigma=2: MW-U s=6 {mw6:.1%} (76.7%+-6pp), Wilcoxon {wil:.1%} (<=2%); "
        f"mn sigma=2: rank-sum s=10 {st10:.1%} (97.7%+-4pp); "
        f"missing {thr.missing_share:.2%}/{mn.missing_share:.2%}; {time.time() - start:.0f}s",
    )
    assert ok


# 3. exhaustive validity of every test operation


class Tally:
    def __init__(self):
        self.cases = 0
        self.violations = []

    def check(self, label, rejected_mass):
        """``rejected_mass`` maps alpha to the probability of a false rejection."""
        self.cases += 1
        for alpha, mass in rejected_mass.items():
            if mass > alpha + 1e-12:
                self.violations.append(f"{label} alpha={alpha}: {mass:.4f}")


def _safe_p(fn):
    try:
        return fn()
    except AttritionError:
        return 1.0  # the procedure cannot run, so it never rejects


def _rates(pvals):
    pvals = np.asarray(pvals)
    return {a: float(np.mean(pvals <= a)) for a in ALPHAS}


def _nulls(n, n1, cfg):
    return build_null(DesignSpec(n, n1), cfg, "exact")


def _validity_sharp(tally, rng):
    for mech in ("general", "mp", "mn", "sharp"):
        for trial in range(12):
            n = int(rng.integers(6, 11))
            n1 = int(rng.integers(2, n - 1))
            cfg = ALL_CONFIGS[trial % len(ALL_CONFIGS)]
            y0, y1, m0, m1 = population(rng, n, mech)
            tau = y1 - y0
            null = _nulls(n, n1, cfg)
            ps = [sharp_test(observe(y0, y1, m0, m1, z), tau, mech, cfg, null=null).p_value
                  for z in assignments(n, n1)]
            tally.check(f"sharp_test {mech} n={n} n1={n1} {cfg.label}", _rates(ps))
            if mech == "sharp":
                ps = [_safe_p(lambda: sharp_test_subsample(observe(y0, y1, m0, m1, z), tau, cfg).p_value)
                      for z in assignments(n, n1)]
                tally.check(f"subsample sharp n={n} {cfg.label}", _rates(ps))


def _validity_mar(tally, rng):
    cfg_list = [StatConfig.wilcoxon(), StatConfig.mwu_power(3)]
    for n, n1 in ((5, 2), (6, 3)):
        for cfg in cfg_list:
            y0 = rng.integers(0, 4, n).astype(float)
            tau = rng.integers(-1, 2, n).astype(float)
            y1 = y0 + tau
            mass = {a: 0.0 for a in ALPHAS}
            total = math.comb(n, n1)
            for m0, m1, w in mar_configurations(n, 0.7):
                for z in assignments(n, n1):
                    p = _safe_p(lambda: sharp_test_subsample(observe(y0, y1, m0, m1, z), tau, cfg).p_value)
                    for a in ALPHAS:
                        if p <= a:
                            mass[a] += w / total
            tally.check(f"subsample mar n={n} {cfg.label}", mass)


def _validity_two_step(tally, rng):
    for mech in ("mp", "mn"):
        for trial in range(8):
            n = int(rng.integers(6, 11))
            n1 = int(rng.integers(2, n - 1))
            cfg = [StatConfig.mann_whitney(), StatConfig.mwu_power(2), StatConfig.mwu_power(4)][trial % 3]
            y0, y1, m0, m1 = population(rng, n, mech)
            tau = y1 - y0
            null = _nulls(n, n - n1 if mech == "mn" else n1, cfg)
            for alpha in ALPHAS:
                ps = [_safe_p(lambda: two_step_test(observe(y0, y1, m0, m1, z), tau, cfg, alpha, null=null, mech=mech)[0].p_value)
                      for z in assignments(n, n1)]
                rate = float(np.mean(np.asarray(ps) <= alpha))
                tally.check(f"two_step {mech} n={n} n1={n1} {cfg.label}", {alpha: rate})


def _validity_quantiles(tally, rng):
    for mech in ("general", "mp", "mn"):
        for trial in range(5):
            n = int(rng.integers(6, 10))
            n1 = int(rng.integers(2, n - 1))
            cfg = ALL_CONFIGS[(trial * 3 + 1) % len(ALL_CONFIGS)]
            y0, y1, m0, m1 = population(rng, n, mech)
            tau = y1 - y0
            null = _nulls(n, n1, cfg)
            grid = np.unique(tau)
            zs = list(assignments(n, n1))
            for k in range(1, n1 + 1):
                for c in grid:
                    flags = []
                    for z in zs:
                        true_null = np.sort(tau[z == 1])[k - 1] <= c
                        if not true_null:
                            flags.append(1.0)
                            continue
                        flags.append(quantile_test(observe(y0, y1, m0, m1, z), QuantileHypothesis(k, float(c)), mech, cfg, null).p_value)
                    tally.check(f"quantile_test {mech} n={n} k={k} c={c} {cfg.label}", _rates(flags))
            # simultaneous band
            for alpha in ALPHAS:
                miss = [not covered(np.sort(tau[z == 1]), prediction_band(observe(y0, y1, m0, m1, z), mech, cfg, alpha, null))
                        for z in zs]
                tally.check(f"prediction_band {mech} n={n} {cfg.label}", {alpha: float(np.mean(miss))})


def _validity_sharp_band(tally, rng):
    for trial in range(3):
        n = int(rng.integers(7, 11))
        n1 = n // 2
        cfg = ALL_CONFIGS[trial]
        y0, y1, m0, m1 = population(rng, n, "sharp")
        tau = y1 - y0
        for alpha in ALPHAS:
            miss = []
            for z in assignments(n, n1):
                ds = observe(y0, y1, m0, m1, z)
                try:
                    band = band_observed_subsample(ds, cfg, alpha, "sharp")
                except AttritionError:
                    miss.append(False)
                    continue
                miss.append(not covered(np.sort(tau[(z == 1) & (m1 == 1)]), band))
            tally.check(f"observed band sharp n={n} {cfg.label}", {alpha: float(np.mean(miss))})


def _validity_ci(tally, rng):
    for mech in ("general", "mp", "mn", "sharp"):
        for trial in range(4):
            n = int(rng.integers(6, 10))
            n1 = int(rng.integers(2, n - 1))
            cfg = ALL_CONFIGS[(trial + 2) % len(ALL_CONFIGS)]
            y0, y1, m0, m1 = population(rng, n, mech, effect="constant")
            d = float(y1[0] - y0[0])
            null = _nulls(n, n1, cfg)
            for alpha in ALPHAS:
                miss = []
                for z in assignments(n, n1):
                    ci = invert_constant_ci(observe(y0, y1, m0, m1, z), mech, cfg, alpha, null)
                    inside = (ci.lower < d or (ci.lower == d and ci.lower_closed)) and \
                             (d < ci.upper or (d == ci.upper and ci.upper_closed))
                    miss.append(not inside)
                tally.check(f"ci {mech} n={n} {cfg.label}", {alpha: float(np.mean(miss))})


def test_exhaustive_validity():
    start = time.time()
    rng = np.random.default_rng(3)
    tally = Tally()
    for part in (_validity_sharp, _validity_mar, _validity_two_step, _validity_quantiles,
                 _validity_sharp_band, _validity_ci):
        part(tally, rng)
    ok = record(
        3,
        not tally.violations,
        f"{tally.cases} exhaustive checks (sharp, subsample incl. weighted mar, two-step, quantile, bands, ci) "
        f"at alpha in {ALPHAS}: {len(tally.violations)} violations; {time.time() - start:.0f}s",
    )
    assert ok, tally.violations[:5]


# 4. closed forms against brute force


def test_oracle_equivalence():
    start = time.time()
    rng = np.random.default_rng(44)
    mismatches = []
    counts = {}

    def cfg_for(i):
        return ALL_CONFIGS[i % len(ALL_CONFIGS)]

    for mech in ("general", "mp", "mn", "sharp"):
        for i in range(500):
            ds = random_tiny_dataset(rng)
            cfg = cfg_for(i)
            d = rng.integers(-2, 3, ds.n).astype(float)
            fast = statistic(ds.z, worst_case(ds, d, mech), cfg)
            if fast != brute_force_worst_statistic(ds, d, mech, cfg):
                mismatches.append(("sharp", mech, i))
            counts["sharp"] = counts.get("sharp", 0) + 1
            if mech != "sharp":
                hyp = QuantileHypothesis(int(rng.integers(1, ds.n1 + 1)), float(rng.integers(-2, 3)))
                if quantile_test(ds, hyp, mech, cfg).statistic != brute_force_quantile_worst(ds, hyp, mech, cfg):
                    mismatches.append(("quantile", mech, i))
                counts["quantile"] = counts.get("quantile", 0) + 1
    for i in range(500):
        sub = random_tiny_dataset(rng, observe=1.0)
        cfg = cfg_for(i)
        k = int(rng.integers(1, sub.n1 + 1))
        c = float(rng.integers(-2, 3))
        null = _nulls(sub.n, sub.n1, cfg)
        if subsample_quantile_test(sub, k, c, cfg, null).statistic != brute_force_subsample_quantile_worst(sub, k, c, cfg):
            mismatches.append(("subsample-quantile", i))
        counts["subsample-quantile"] = counts.get("subsample-quantile", 0) + 1
    for n in range(2, 11):
        for n1 in range(1, n):
            for cfg in ALL_CONFIGS:
                if not np.array_equal(build_null(DesignSpec(n, n1), cfg, "exact").values,
                                      brute_force_null(DesignSpec(n, n1), cfg).values):
                    mismatches.append(("null", n, n1, cfg.label))
                counts["null"] = counts.get("null", 0) + 1
    ok = record(4, not mismatches, f"checks {counts}: {len(mismatches)} mismatches; {time.time() - start:.0f}s")
    assert ok, mismatches[:5]


# 5. structural identities


def _random_ext_vector(rng, n):
    pool = np.array([-INF, -1.5, 0.0, 0.0, 1.0, 2.5, INF])
    return rng.choice(pool, n)


def _random_labels(rng, n):
    z = np.zeros(n, dtype=int)
    z[rng.choice(n, int(rng.integers(1, n)), replace=False)] = 1
    return z


def _outcome_only_imputation(ds, d):
    # treated observed: y - d; treated missing: -inf; control observed: y; control missing: +inf
    out = np.where(ds.z == 1, -INF, INF).astype(float)
    obs = ds.m == 1
    out[obs] = ds.y[obs] - d[obs] * ds.z[obs]
    return out


def test_structural_identities():
    rng = np.random.default_rng(55)
    failures = {}

    def fail(name):
        failures[name] = failures.get(name, 0) + 1

    w, u = StatConfig.wilcoxon(), StatConfig.mann_whitney()
    for _ in range(1000):
        n = int(rng.integers(2, 30))
        z, y = _random_labels(rng, n), _random_ext_vector(rng, n)
        n1 = int(z.sum())
        if statistic(z, y, w) != statistic(z, y, u) + n1 * (n1 + 1) / 2:
            fail("wilcoxon-mwu")

    for _ in range(1000):
        n = int(rng.integers(2, 20))
        z, y = _random_labels(rng, n), _random_ext_vector(rng, n)
        finite = y[np.isfinite(y)]
        hi = (finite.max() if finite.size else 0.0) + 1.0 + rng.random()
        lo = (finite.min() if finite.size else 0.0) - 1.0 - rng.random()
        swapped = np.where(y == INF, hi, np.where(y == -INF, lo, y))
        for cfg in ALL_CONFIGS:
            if statistic(z, y, cfg) != statistic(z, swapped, cfg):
                fail("extended-real reduction")

    for _ in range(10_000):
        n = int(rng.integers(2, 15))
        z, y = _random_labels(rng, n), _random_ext_vector(rng, n)
        cfg = ALL_CONFIGS[int(rng.integers(len(ALL_CONFIGS)))]
        i = int(rng.integers(n))
        moved = y.copy()
        if rng.random() < 0.2:
            moved[i] = INF if z[i] else -INF
        elif math.isfinite(y[i]):
            moved[i] = y[i] + (1 if z[i] else -1) * rng.random() * 3
        if statistic(z, moved, cfg) < statistic(z, y, cfg):
            fail("effect-increasing")

    for i in range(300):
        ds = random_tiny_dataset(rng, 3, 12)
        cfg = ALL_CONFIGS[i % len(ALL_CONFIGS)]
        k = int(rng.integers(1, ds.n1 + 1))
        c = float(rng.integers(-2, 3))
        for mech in ("general", "mp", "mn"):
            ps = {quantile_test(ds, QuantileHypothesis(k, c, kap), mech, cfg).p_value for kap in (0.01, 1.0, 50.0)}
            if len(ps) != 1:
                fail("kappa-invariance")

    for i in range(500):
        ds = random_tiny_dataset(rng, 3, 12)
        cfg = ALL_CONFIGS[i % len(ALL_CONFIGS)]
        d = rng.integers(-2, 3, ds.n).astype(float)
        null = _nulls(ds.n, ds.n1, cfg)
        outcome_only = tail_prob(null, statistic(ds.z, _outcome_only_imputation(ds, d), cfg))
        if outcome_only != sharp_test(ds, d, "general", cfg, b=INF, null=null).p_value:
            fail("outcome-only vs composite b=inf")

    ok = record(5, not failures, f"wilcoxon = mwu + n1(n1+1)/2, ext-real reduction, effect-increasing (1e4), "
                                 f"kappa-invariance, outcome-only = composite(b=inf): failures {failures or 'none'}")
    assert ok


# 6. two-step guarantees


def test_two_step_guarantees():
    rng = np.random.default_rng(66)
    problems = []
    checks = 0
    for i in range(400):
        ds = random_tiny_dataset(rng, 4, 10)
        cfg = [StatConfig.mann_whitney(), StatConfig.mwu_power(3), StatConfig.mwu_power(6)][i % 3]
        alpha = float(rng.choice([0.1, 0.2, 0.3]))
        beta = alpha * float(rng.uniform(0.1, 0.9))
        d = rng.integers(-2, 3, ds.n).astype(float)
        try:
            res, _ = two_step_test(ds, d, cfg, alpha, beta)
        except AttritionError:
            continue
        checks += 1
        if res.p_value < beta:
            problems.append(("p < beta", i))
        forced, trace = two_step_test(ds, d, cfg, alpha, beta, m_hat=ds.n)
        base = sharp_test(ds, d, "mp", cfg, b=INF).p_value
        if trace.m_lower != 0 or forced.p_value != min(1.0, base + beta):
            problems.append(("m_lower=0 identity", i))

    coverage_cases = 0
    worst = 1.0
    for n in range(2, 13):
        for n0 in range(1, n):
            for beta in (0.01, 0.05, 0.1, 0.25, 0.5):
                bounds = [upper_conf_total_m0(n, n0, x, beta) for x in range(0, n0 + 1)]
                for total in range(0, n + 1):
                    # exact law of the observed-control count given `total` units observed under control
                    xs = np.arange(max(0, n0 - (n - total)), min(n0, total) + 1)
                    pmf = hypergeom.pmf(xs, n, total, n0)
                    cover = float(sum(p for x, p in zip(xs, pmf) if total <= bounds[x]))
                    coverage_cases += 1
                    worst = min(worst, cover - (1 - beta))
                    if cover < 1 - beta - 1e-12:
                        problems.append(("coverage", n, n0, beta, total, cover))
    ok = record(
        6,
        not problems,
        f"{checks} random two-step runs (p >= beta, m_lower=0 gives p_mp + beta exactly); "
        f"bound coverage exact over {coverage_cases} (n<=12, n0, beta, T) cases, min slack {worst:+.2e}; "
        f"{len(problems)} problems",
    )
    assert ok, problems[:5]


# 7. simultaneous coverage of quantile bands


BAND_FAMILIES = {
    "threshold": dict(p=0.9, q=0.1),
    "mp": dict(p=0.9, q=0.05),
    "mn": dict(p=0.1, q=0.05),
    "random": dict(p=0.9),
    "sharp": dict(p=0.9),
}


def test_band_simultaneous_coverage():
    start = time.time()
    results = {}
    for family, params in BAND_FAMILIES.items():
        spec = SimSpec(n=20, n1=10, reps=2000, alpha=0.1, seed=7, missing=family,
                       stats=["wilcoxon", "power:6"], **params)
        rep = run_experiment("band", spec)
        for row in rep.rows:
            results[f"{family}/{row['procedure'].split('|')[1]}"] = row["rate"]
    ok = record(
        7,
        all(v >= 0.885 for v in results.values()),
        "coverage " + ", ".join(f"{k} {v:.1%}" for k, v in results.items())
        + f" (each >= 88.5%); {time.time() - start:.0f}s",
    )
    assert ok


# 8. Monte Carlo null fidelity


def test_monte_carlo_null_fidelity():
    configs = [StatConfig.wilcoxon(), StatConfig.mann_whitney()]
    configs += [StatConfig.stephenson(s) for s in range(2, 11)]
    configs += [StatConfig.mwu_power(s) for s in range(2, 11)]
    worst = (0.0, None)
    for cfg in configs:
        exact = build_null(DesignSpec(10, 5), cfg, "exact")
        mc = build_null(DesignSpec(10, 5), cfg, "mc", draws=100_000, seed=1)
        grid = np.unique(exact.values)
        dist = max(abs(tail_prob(exact, t) - tail_prob(mc, t)) for t in grid)
        if dist > worst[0]:
            worst = (dist, cfg.label)
    ok = record(8, worst[0] <= 0.01, f"max Kolmogorov distance of tails over {len(configs)} configs "
                                     f"{worst[0]:.4f} ({worst[1]}), limit 0.01")
    assert ok


# 9. Delta_H exact vs Monte Carlo


def _random_delta_spec(rng):
    n = int(rng.integers(5, 300))
    n_s = int(rng.integers(1, n + 1))
    j = int(rng.integers(1, min(6, n) + 1))
    k = np.sort(rng.choice(np.arange(1, n + 1), j, replace=False))
    k_obs = np.sort(rng.integers(0, n_s + 1, j))
    return DeltaHSpec(n, n_s, tuple(k), tuple(k_obs))


def test_delta_h_cross_check():
    rng = np.random.default_rng(99)
    draws = 100_000
    worst = 0.0
    bad = []
    for i in range(100):
        spec = _random_delta_spec(rng)
        ex = delta_H(spec)
        mc = delta_H(spec, "mc", draws=draws, seed=i)
        p = max(ex, 1 / draws)
        se = math.sqrt(p * (1 - min(p, 1 - 1 / draws)) / draws)
        z = abs(ex - mc) / se
        worst = max(worst, z)
        if z > 3:
            bad.append((spec, ex, mc))
    trivial = delta_H(DeltaHSpec(50, 20, (10, 30, 45), (0, 0, 0)))
    ok = record(9, not bad and trivial == 0.0,
                f"100 random specs, max |exact - mc| = {worst:.2f} se (limit 3), {len(bad)} outside; k'=0 gives {trivial}")
    assert ok, bad[:3]
