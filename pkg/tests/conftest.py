import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from reltransport import AnalysisDataset, FittedModel, ModelSpec  # noqa: E402


def binary_outcomes(count, mean):
    """``count`` zeros/ones whose average is exactly ``mean``."""
    ones = round(count * mean)
    assert abs(ones - count * mean) < 1e-9, (count, mean)
    return [1.0] * ones + [0.0] * (count - ones)


def build(cells, x_names=("x",), w_names=(), outcome_kind="binary"):
    """Dataset from ``(s, a, x, w, count, mean)`` cells with exact binary means."""
    x, w, s, a, y = [], [], [], [], []
    for cs, ca, cx, cw, count, mean in cells:
        ys = binary_outcomes(count, mean) if outcome_kind == "binary" else [mean] * count
        for yi in ys:
            s.append(cs)
            a.append(ca)
            x.append(cx if isinstance(cx, (tuple, list)) else (cx,))
            wv = cw if isinstance(cw, (tuple, list)) else (cw,)
            w.append(wv if w_names else ())
            y.append(yi)
    w_arr = None
    if w_names:
        w_arr = np.array([wi if si == 0 else (np.nan,) * len(w_names) for wi, si in zip(w, s)], dtype=float)
    return AnalysisDataset(np.array(x, dtype=float), s, a, y, x_names, w_arr, w_names, outcome_kind)


@pytest.fixture
def logit_x():
    return ModelSpec("bernoulli", "logit", ("x",))


@pytest.fixture
def saturated_xw():
    return ModelSpec("bernoulli", "logit", ("x", "w", "x:w"))


def linear_model(intercept, slope, name="x"):
    """Fixed gaussian/identity model ``intercept + slope * x``."""
    return FittedModel(ModelSpec("gaussian", "identity", (name,)), [intercept, slope])


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    verdicts = getattr(acceptance, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(verdicts):
        terminalreporter.write_line(verdicts[number])
