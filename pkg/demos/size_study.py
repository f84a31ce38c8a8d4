"""A small size study: how often is a true null rejected?

Outcomes depend on nothing, yet missingness depends on the outcome. The
worst-case test stays below the nominal 10% while the drop-missing test
rejects most of the time.

Run with ``python demos/size_study.py`` (about half a minute).
"""
from attrition_ri.simulate import SimSpec, run_experiment

for family, params in (("threshold", dict(p=0.95, q=0.05)), ("random", dict(p=0.95))):
    spec = SimSpec(n=500, n1=250, missing=family, reps=300, alpha=0.1, seed=11, **params)
    report = run_experiment("type1", spec, ["worst_y0|wilcoxon", "naive|wilcoxon"])
    print(f"{family} missingness ({report.missing_share:.1%} missing)")
    for row in report.rows:
        print(f"  {row['procedure']:<20} rejection rate {row['rate']:.1%} (se {row['se']:.1%})")
