"""
Regression fits used to control discretization bias and read off convergence orders.
"""

import logging
from typing import Sequence, Tuple

import numpy as np
import pandas as pd
import statsmodels.api as sm
from sklearn.linear_model import LinearRegression

from src.errors import InvalidArgumentError

logger = logging.getLogger(__name__)


def sqrt_dt_extrapolation(dts: Sequence[float], means: Sequence[float], stderrs: Sequence[float]) -> Tuple[float, float]:
    """
    Weighted least squares of mean against √dt, weights 1/stderr².

    The scale is fixed at 1 so the intercept's standard error comes from the
    Monte Carlo errors alone, also when only two levels are fitted.

    Returns:
        (intercept at dt = 0, its standard error)
    """
    dts = np.asarray(dts, dtype=float)
    means = np.asarray(means, dtype=float)
    stderrs = np.asarray(stderrs, dtype=float)
    if dts.size < 2:
        raise InvalidArgumentError("Extrapolation needs at least two step sizes")
    if np.any(stderrs <= 0.0) or not np.all(np.isfinite(stderrs)):
        raise InvalidArgumentError("Standard errors must be positive and finite")
    X = sm.add_constant(np.sqrt(dts))
    model = sm.WLS(means, X, weights=1.0 / stderrs ** 2)
    fitted = model.fit(cov_type="fixed scale")
    intercept = float(fitted.params[0])
    intercept_se = float(fitted.bse[0])
    logger.debug(f"sqrt(dt) fit: intercept {intercept:.6g} +- {intercept_se:.2g}, slope {fitted.params[1]:.4g}")
    return intercept, intercept_se


def log_log_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Slope of log|y| against log x by ordinary least squares."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    if x.size < 2 or np.any(x <= 0.0) or np.any(y == 0.0):
        raise InvalidArgumentError("log-log fit needs at least two positive samples")
    model = LinearRegression()
    model.fit(np.log(x).reshape(-1, 1), np.log(y))
    return float(model.coef_[0])


def observed_order(h: Sequence[float], values: Sequence[float]) -> float:
    """
    Convergence order of a sequence toward its limit as h → 0.

    Uses successive differences, so the limit need not be known.
    """
    h = np.asarray(h, dtype=float)
    values = np.asarray(values, dtype=float)
    if h.size < 3:
        raise InvalidArgumentError("Observed order needs at least three levels")
    return log_log_slope(h[:-1], np.diff(values))


def convergence_table(h: Sequence[float], values: Sequence[float], exact: float) -> pd.DataFrame:
    """Errors against a known limit, with the local order between levels."""
    df = pd.DataFrame({"h": np.asarray(h, dtype=float), "value": np.asarray(values, dtype=float)})
    df["error"] = (df["value"] - exact).abs()
    df["order"] = np.log(df["error"].shift(1) / df["error"]) / np.log(df["h"].shift(1) / df["h"])
    return df
