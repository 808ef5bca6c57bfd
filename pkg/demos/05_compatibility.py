"""
Ratio and difference transportability rarely hold together
==========================================================

Given the four potential-outcome means of one covariate stratum, the
checker flags ratio transportability, difference transportability, no
effect (I1) and no selection (I2). When both transportability conditions
hold, one of I1 or I2 must hold as well; this is verified in exact
rational arithmetic.
"""

from fractions import Fraction

from reltransport import StratumMeans, compat_check, worked_example

strata = [
    StratumMeans(2, 1, 4, 2),      # same ratio, different differences
    StratumMeans(3, 3, 5, 5),      # no effect anywhere
    StratumMeans(2, 1, 2, 1),      # same means in both populations
    StratumMeans(Fraction(3, 10), Fraction(1, 10), Fraction(9, 10), Fraction(3, 10)),
]
report = compat_check(strata)
for means, flags in zip(strata, report.strata):
    print(tuple(str(v) for v in (means.e11, means.e10, means.e01, means.e00)), vars(flags))
print("theorem satisfied:", report.theorem_satisfied)

# A simulated scenario with a ratio effect transports ratios but not differences.
print([vars(f) for f in compat_check(worked_example().stratum_means(), tol=1e-12).strata])
