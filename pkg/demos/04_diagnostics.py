"""
Checking what the data can say
==============================

If both ratio and difference effects transported, then either the trial
arms agree within X (R1) or the trial control arm matches the target
within X (R2). Both are observable. Positivity summaries show where fitted
participation or treatment probabilities get close to zero.
"""

from reltransport import ModelSpec, check_restriction, generate, positivity_report, worked_example

data = generate(worked_example(), 4000, 4000, seed=4)
spec = ModelSpec("bernoulli", "logit", ("x",))

for which in ("R1", "R2"):
    result = check_restriction(data, which, spec, B=200, seed=1)
    iv = result.bootstrap_interval
    print(f"{which}: {result.statistic:+.4f}  [{iv.lower:+.4f}, {iv.upper:+.4f}]")
    print("   ", result.interpretation)

report = positivity_report(data, threshold=0.05)
for summary in (report.participation, report.trial_treatment, report.target_control):
    print(f"{summary.condition:6s} {summary.quantity:20s} min {summary.minimum:.3f} "
          f"median {summary.median:.3f} flagged {len(summary.flagged_rows)}"
          + ("  (degenerate)" if summary.degenerate else ""))
