"""Brute-force reference computations used to freeze expected values.

Everything here works on plain Python rows with exact ``Fraction`` arithmetic
and never touches the package's model-fitting code.
"""

from collections import defaultdict
from fractions import Fraction


def frac(v):
    return Fraction(v)


def stratum_means(rows, key, value):
    """Mean of ``value(row)`` within groups of ``key(row)``."""
    sums, counts = defaultdict(Fraction), defaultdict(int)
    for r in rows:
        k = key(r)
        sums[k] += frac(value(r))
        counts[k] += 1
    return {k: sums[k] / counts[k] for k in sums}


def split(ds):
    """Plain-tuple rows ``(s, a, x, w, y)`` from an AnalysisDataset."""
    out = []
    for i in range(ds.n):
        x = tuple(float(v) for v in ds.x[i])
        w = tuple(float(v) for v in ds.w[i]) if (ds.w_names and ds.s[i] == 0) else ()
        out.append((int(ds.s[i]), int(ds.a[i]), x, w, float(ds.y[i])))
    return out


def stratified_estimators(ds):
    """Saturated plug-in estimators computed by grouping and averaging.

    Returns a dict with phi, chi, psi and their ATE counterparts as Fractions.
    With no W, psi equals chi.
    """
    rows = split(ds)
    trial = [r for r in rows if r[0] == 1]
    target = [r for r in rows if r[0] == 0]
    controls = [r for r in target if r[1] == 0]

    mu1 = stratum_means([r for r in trial if r[1] == 1], lambda r: r[2], lambda r: r[4])
    mu0 = stratum_means([r for r in trial if r[1] == 0], lambda r: r[2], lambda r: r[4])
    ratio = {x: mu1[x] / mu0[x] for x in mu1}
    g = stratum_means(target, lambda r: r[2], lambda r: r[4])
    h = stratum_means(controls, lambda r: r[2], lambda r: r[4])
    m = stratum_means(controls, lambda r: (r[2], r[3]), lambda r: r[4])
    # b(x): average of m over every target row with that x
    b = stratum_means(target, lambda r: r[2], lambda r: m[(r[2], r[3])])

    n0 = len(target)
    num = {
        "phi": sum(ratio[r[2]] * g[r[2]] for r in target) / n0,
        "chi": sum(ratio[r[2]] * h[r[2]] for r in target) / n0,
        "psi": sum(ratio[r[2]] * b[r[2]] for r in target) / n0,
    }
    den = {
        "phi": sum(frac(r[4]) for r in target) / n0,
        "chi": sum(h[r[2]] for r in target) / n0,
        "psi": sum(m[(r[2], r[3])] for r in target) / n0,
    }
    out = {}
    for name, ate in (("phi", "beta"), ("chi", "gamma"), ("psi", "delta")):
        out[name] = num[name] / den[name]
        out[ate] = num[name] - den[name]
    out["parts"] = {"ratio": ratio, "g": g, "h": h, "m": m, "b": b, "num": num, "den": den}
    return out


def scenario_truth(target_x_probs, control_means, effect):
    """Exact mean of Y^1, Y^0, ratio and difference over a finite target grid."""
    p = [Fraction(v) for v in target_x_probs]
    e0 = [Fraction(v) for v in control_means]
    rho = [Fraction(v) for v in effect]
    y1 = sum(pi * ri * ei for pi, ri, ei in zip(p, rho, e0))
    y0 = sum(pi * ei for pi, ei in zip(p, e0))
    return y1, y0, y1 / y0, y1 - y0


def naive_phi_limit(target_x_probs, control_means, effect, treat_probs):
    """Probability limit of phi when target treatment varies with X.

    The target outcome regression then averages treated and untreated means:
    g(x) = e0(x) * (1 + pi(x) * (rho(x) - 1)).
    """
    p = [Fraction(v) for v in target_x_probs]
    e0 = [Fraction(v) for v in control_means]
    rho = [Fraction(v) for v in effect]
    pi = [Fraction(v) for v in treat_probs]
    g = [e * (1 + t * (r - 1)) for e, t, r in zip(e0, pi, rho)]
    num = sum(pk * rk * gk for pk, rk, gk in zip(p, rho, g))
    den = sum(pk * gk for pk, gk in zip(p, g))
    return num / den
