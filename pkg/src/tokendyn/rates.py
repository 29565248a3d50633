"""Numerical verdicts on asymptotic rates.

The convergence and divergence statements are O(.) bounds, so the helpers
here return fitted exponents and sup-statistics; callers compare them with
one-sided tolerances.
"""
from dataclasses import dataclass

import numpy as np

from .dynamics import BLOWUP_DETECTED, TrajectoryRecord
from .errors import DomainError, TokenDynError

MIN_SAMPLES = 10


@dataclass(frozen=True)
class RateFit:
    """Least-squares line ``ln(value) = slope * u + intercept``.

    ``u`` is ln t for :func:`fit_power` and ln ln t for :func:`fit_logpower`.
    ``ratio_spread`` (log-power fits only) is max/min of value / (ln t)^l
    over the window; 1 means the ratio is constant.
    """

    slope: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    n_samples: int
    ratio_spread: float | None = None

    def to_dict(self):
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "window": list(self.window),
            "n_samples": self.n_samples,
            "ratio_spread": self.ratio_spread,
        }


def _select(times, values, window):
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.shape != v.shape or t.ndim != 1:
        raise TokenDynError("times and values must be 1-D arrays of equal length")
    lo, hi = (t[0], t[-1]) if window is None else window
    mask = (t >= lo) & (t <= hi)
    if np.count_nonzero(mask) < MIN_SAMPLES:
        raise TokenDynError(
            f"window [{lo}, {hi}] holds {np.count_nonzero(mask)} samples, need {MIN_SAMPLES}"
        )
    if np.any(v[mask] <= 0):
        raise DomainError("values must be strictly positive on the window (pass |x|)")
    return t[mask], v[mask], (float(lo), float(hi))


def _linefit(u, w):
    um, wm = u.mean(), w.mean()
    du, dw = u - um, w - wm
    sxx = np.dot(du, du)
    slope = np.dot(du, dw) / sxx
    intercept = wm - slope * um
    resid = dw - slope * du
    ss_tot = np.dot(dw, dw)
    # a flat series is fitted exactly; roundoff in ss_tot would make r2 noise
    flat = ss_tot <= len(w) * (1e-13 * max(1.0, abs(wm))) ** 2
    r2 = 1.0 if flat else 1.0 - np.dot(resid, resid) / ss_tot
    return float(slope), float(intercept), float(min(1.0, max(0.0, r2)))


def fit_power(times, values, window=None):
    """Fit values ~ C t^slope by regressing ln(value) on ln(t)."""
    t, v, win = _select(times, values, window)
    if np.any(t <= 0):
        raise DomainError("power fits need t > 0 on the window")
    slope, intercept, r2 = _linefit(np.log(t), np.log(v))
    return RateFit(slope, intercept, r2, win, len(t))


def fit_logpower(times, values, power_l, window):
    """Fit values ~ C (ln t)^slope by regressing ln(value) on ln(ln t).

    Also reports the spread of value / (ln t)^power_l over the window.
    """
    t, v, win = _select(times, values, window)
    if win[0] <= 1:
        raise DomainError("log-power fits need a window with t_lo > 1")
    lnt = np.log(t)
    slope, intercept, r2 = _linefit(np.log(lnt), np.log(v))
    ratio = v / lnt**power_l
    return RateFit(slope, intercept, r2, win, len(t), float(ratio.max() / ratio.min()))


@dataclass(frozen=True)
class AttentionDecay:
    """Per-entry statistics of |P_dlj(t)|, each of shape (D, L, L).

    weighted_sup: sup of t |P_dlj(t)| over the snapshots in the window.
    running_max:  sup of |P_dlj(t)| over the window.
    terminal:     |P_dlj| at the last snapshot in the window.
    """

    weighted_sup: np.ndarray
    running_max: np.ndarray
    terminal: np.ndarray


def attention_decay_check(record, window=None):
    if record.attention is None:
        raise TokenDynError("record has no attention snapshots")
    t = record.times
    mask = np.ones(len(t), dtype=bool) if window is None else (t >= window[0]) & (t <= window[1])
    if not np.any(mask):
        raise TokenDynError("no snapshots inside the window")
    absP = np.abs(record.attention[mask])
    return AttentionDecay(
        weighted_sup=np.max(t[mask][:, None, None, None] * absP, axis=0),
        running_max=np.max(absP, axis=0),
        terminal=absP[-1],
    )


def estimate_blowup(record: TrajectoryRecord, token=None, channel=None, max_value=1e4, n_points=20):
    """Extrapolate the blow-up time from the tail of a diverging trajectory.

    Near a singularity x ~ c (T - t)^(-1/2), so |x|^-2 is close to linear in
    t. The fit uses the last ``n_points`` samples of the exploding component
    with ``|x| <= max_value`` (larger values make |x|^-2 too small to resolve
    against t) and returns the root of the fitted line.
    """
    if record.status != BLOWUP_DETECTED:
        raise TokenDynError("estimate_blowup needs a record with status blowup_detected")
    final = np.abs(record.states[-1])
    if token is None or channel is None:
        channel, token = np.unravel_index(int(np.argmax(final)), final.shape)
    series = np.abs(record.states[:, channel, token])
    ok = np.flatnonzero((series > 0) & (series <= max_value))
    idx = ok[-n_points:]
    if len(idx) < MIN_SAMPLES:
        raise TokenDynError(f"only {len(idx)} usable samples near blow-up, need {MIN_SAMPLES}")
    t = record.times[idx]
    w = series[idx] ** -2.0
    tm = t.mean()
    slope, intercept, _ = _linefit(t - tm, w)
    if slope >= 0:
        raise TokenDynError("|x|^-2 is not decreasing near the end; no blow-up to extrapolate")
    return float(tm - intercept / slope)
