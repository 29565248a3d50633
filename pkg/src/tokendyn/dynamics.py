"""Continuous-time token dynamics.

Treating layer depth as time, a stack of residual S6 layers becomes the ODE

    dx_dl/dt = sum_{j<=l} P_dlj(x) x_dj,

whose right-hand side is exactly the convolutional S6 output at the current
state. This module integrates that ODE (fixed-step RK4, step-doubling
adaptive RK4 with blow-up detection) and iterates the discrete stack.
"""
from dataclasses import dataclass
import math

import numpy as np

from . import _core, _pykernels
from .errors import DomainError, TokenDynError, UnsupportedDimensionError
from .s6 import as_tokens, hidden_attention, s6_forward_convolutional, softplus

DEFAULT_BLOWUP_THRESHOLD = 1e8
DEFAULT_H_MIN = 1e-12
# at 1e8 the singularity is ~1e-8 away in time; looser tolerances shift the
# numerical blow-up time by more than that
DEFAULT_REL_TOL = 1e-8
# accepted steps allowed after the state has grown 10x past its initial scale;
# near some singularities a stiff memory mode pins h far above h_min
DEFAULT_STALL_STEPS = 20_000

COMPLETED = "completed"
BLOWUP_DETECTED = "blowup_detected"
STEP_UNDERFLOW = "step_underflow"


@dataclass
class TrajectoryRecord:
    """Sampled solution of the token ODE.

    ``states`` has shape (n, D, L) and ``attention`` (when recorded) shape
    (n, D, L, L), both aligned with ``times``.
    """

    times: np.ndarray
    states: np.ndarray
    status: str = COMPLETED
    attention: np.ndarray | None = None
    blowup_time: float | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.states.ndim == 1:  # (n,) single scalar token
            self.states = self.states[:, None, None]
        elif self.states.ndim == 2:  # (n, L) one-channel shorthand
            self.states = self.states[:, None, :]
        if len(self.times) != len(self.states):
            raise TokenDynError("times and states have different lengths")
        if np.any(np.diff(self.times) <= 0):
            raise TokenDynError("times must be strictly increasing")
        if self.status == BLOWUP_DETECTED and self.blowup_time is None:
            self.blowup_time = float(self.times[-1])

    @property
    def D(self):
        return self.states.shape[1]

    @property
    def L(self):
        return self.states.shape[2]

    def token(self, l, d=0):
        """Time series of token ``l`` (0-based) in channel ``d``."""
        return self.states[:, d, l]

    def norms(self):
        """Euclidean norm of every token at every snapshot, shape (n, L)."""
        return np.linalg.norm(self.states, axis=1)


@dataclass(frozen=True)
class BlowupReport:
    detected: bool
    blowup_time: float | None = None
    trigger: tuple[int, int] | None = None  # (token index, channel)


def _model_rhs(params):
    M, sd, a = params.io_matrix, params.S_Delta, params.a

    def f(x):
        return _core.attention_rhs(x, M, sd, a, False)[0]

    return f


def ode_rhs(params, x):
    """dx/dt at state ``x``: the convolutional S6 output evaluated at x."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DomainError("state contains non-finite values")
    return s6_forward_convolutional(params, x)


def drift_decomposition(params, x):
    """Split the one-channel drift into a self term and a coupling term.

    Returns ``(self_term, coupling_term)``, each of length L, with
    self_term_l = mu x_l^3 Delta(x_l) and coupling_term_l = g_l x_l where
    g_1 = 0 and g_l = sum_{j<l} mu x_j^2 Delta(x_j) exp(-a sum_{k=j+1}^{l} Delta(x_k)).
    """
    if params.D != 1:
        raise UnsupportedDimensionError("drift_decomposition is defined for D = 1 only")
    x = as_tokens(x, 1)[0]
    mu = params.io_matrix[0, 0]
    a = params.a[0]
    step = softplus(params.S_Delta[0, 0] * x)
    self_term = mu * x**3 * step

    L = x.shape[0]
    g = np.zeros(L)
    for l in range(1, L):
        tail = np.cumsum(step[l:0:-1])[::-1]  # tail[j] = sum_{k=j+1}^{l} step[k]
        j = np.arange(l)
        g[l] = np.sum(mu * x[j] ** 2 * step[j] * np.exp(-a * tail))
    return self_term, g * x


def _check_horizon(t_end, h=None):
    if not (t_end > 0 and math.isfinite(t_end)):
        raise TokenDynError(f"t_end must be positive and finite, got {t_end}")
    if h is not None and not (0 < h <= t_end):
        raise TokenDynError(f"step h must satisfy 0 < h <= t_end, got h={h}")


def snapshot_times(t_end, count, policy="linear", t_min=None):
    """Sample times in (0, t_end] on a linear or geometric grid.

    The geometric grid starts at ``t_min`` (default ``t_end * 1e-4``). The
    returned grid always ends exactly at ``t_end``; t = 0 is not included.
    """
    if count < 1:
        raise TokenDynError("snapshot count must be >= 1")
    if policy == "linear":
        ts = np.linspace(0.0, t_end, count + 1)[1:]
    elif policy == "geometric":
        t_min = t_end * 1e-4 if t_min is None else t_min
        if not 0 < t_min < t_end:
            raise TokenDynError("geometric grid needs 0 < t_min < t_end")
        ts = np.geomspace(t_min, t_end, count)
    else:
        raise TokenDynError(f"unknown snapshot policy {policy!r}")
    ts[-1] = t_end
    return ts


def _attach_attention(params, record):
    record.attention = np.stack([hidden_attention(params, s) for s in record.states])
    return record


def integrate_fixed(
    params,
    x0,
    t_end,
    h,
    sample_every=1,
    with_attention=False,
    blowup_threshold=DEFAULT_BLOWUP_THRESHOLD,
    sample_times=None,
    rhs=None,
):
    """Integrate with classical RK4 at a constant step.

    The step is shrunk to ``t_end / ceil(t_end / h)`` so that the grid lands on
    ``t_end``. Snapshots are taken at t = 0, every ``sample_every`` steps and at
    ``t_end``; alternatively ``sample_times`` picks the nearest grid steps.
    If any component leaves ``[-blowup_threshold, blowup_threshold]`` the run
    stops with status ``blowup_detected`` and the last trusted state is the
    final snapshot.

    ``rhs`` replaces the model right-hand side with any ``f(x) -> dx/dt``
    (``params`` is then ignored).
    """
    _check_horizon(t_end, h)
    if sample_every < 1:
        raise TokenDynError("sample_every must be >= 1")
    x0 = as_tokens(x0) if rhs is None else np.asarray(x0, dtype=np.float64)
    if rhs is None and x0.shape[0] != params.D:
        raise TokenDynError(f"x0 has {x0.shape[0]} channels, params have {params.D}")

    n = max(1, math.ceil(t_end / h * (1 - 1e-12)))
    h_eff = t_end / n
    if sample_times is None:
        record = np.arange(0, n + 1, sample_every, dtype=np.int64)
    else:
        record = np.rint(np.asarray(sample_times, dtype=np.float64) / h_eff).astype(np.int64)
        record = record[(record >= 0) & (record <= n)]
    record = np.unique(np.concatenate([[0], record, [n]]))

    if rhs is None:
        states, steps, status, last = _core.rk4_run(
            x0, params.io_matrix, params.S_Delta, params.a, h_eff, n, record, blowup_threshold
        )
    else:
        states, steps, status, last = _pykernels.rk4_loop(
            rhs, x0, h_eff, n, record, blowup_threshold
        )
    times = steps * h_eff
    if steps[-1] == n:
        times[-1] = t_end
    rec = TrajectoryRecord(times=times, states=states)
    if status == _core.STATUS_BLOWUP:
        rec.status = BLOWUP_DETECTED
        rec.blowup_time = float(last * h_eff)
    if with_attention and rhs is None:
        _attach_attention(params, rec)
    return rec


def _rk4_step(f, x, h, k1=None):
    if k1 is None:
        k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_adaptive(
    params,
    x0,
    t_end,
    rel_tol=DEFAULT_REL_TOL,
    blowup_threshold=DEFAULT_BLOWUP_THRESHOLD,
    *,
    sample_times=None,
    with_attention=False,
    h0=None,
    h_min=DEFAULT_H_MIN,
    rhs=None,
    max_steps=5_000_000,
    stall_steps=DEFAULT_STALL_STEPS,
):
    """Adaptive RK4 with step-doubling error control and blow-up detection.

    Each step compares one RK4 step of size h with two steps of size h/2 and
    accepts when ``|x_half - x_full| <= rel_tol * (1 + |x_half|)`` in every
    component. If no ``sample_times`` are given every accepted step is
    recorded; otherwise steps are clipped to land on the requested times.

    The run ends with ``blowup_detected`` when an accepted step would take
    ``max|x|`` above ``blowup_threshold`` (that step is discarded, so the
    reported time is the last trusted one). It also ends with
    ``blowup_detected`` once the state has grown past 10x its initial scale
    and then either the step falls below ``h_min`` or ``stall_steps`` more
    steps are accepted without reaching the threshold. A step underflow
    without growth is reported as ``step_underflow``.

    Returns
    -------
    (TrajectoryRecord, BlowupReport)
    """
    _check_horizon(t_end)
    if not 0 < rel_tol <= 1e-2:
        raise TokenDynError(f"rel_tol must be in (0, 1e-2], got {rel_tol}")
    if not blowup_threshold >= 1e3:
        raise TokenDynError("blowup_threshold must be >= 1e3")
    x = as_tokens(x0) if rhs is None else np.asarray(x0, dtype=np.float64)
    if rhs is None and x.shape[0] != params.D:
        raise TokenDynError(f"x0 has {x.shape[0]} channels, params have {params.D}")
    f = _model_rhs(params) if rhs is None else rhs

    if sample_times is None:
        targets = None
    else:
        targets = np.asarray(sample_times, dtype=np.float64)
        targets = np.unique(targets[(targets > 0) & (targets <= t_end)])
        if targets.size == 0 or targets[-1] != t_end:
            targets = np.append(targets, t_end)
    next_target = 0

    scale0 = max(1.0, float(np.max(np.abs(x))))
    t = 0.0
    h = min(t_end, 1e-2) if h0 is None else h0
    times = [0.0]
    states = [x.copy()]
    status = COMPLETED
    grown_steps = 0

    for _ in range(max_steps):
        if t >= t_end:
            break
        stop_at = t_end if targets is None else targets[next_target]
        h_try = min(h, stop_at - t)
        landing = h_try == stop_at - t

        k1 = f(x)
        full = _rk4_step(f, x, h_try, k1)
        half = _rk4_step(f, _rk4_step(f, x, 0.5 * h_try, k1), 0.5 * h_try)
        with np.errstate(over="ignore", invalid="ignore"):
            ratio = np.abs(half - full) / (rel_tol * (1.0 + np.abs(half)))
            err = float(np.max(ratio)) if np.all(np.isfinite(half)) else math.inf
        if not math.isfinite(err):
            err = math.inf

        if err <= 1.0:
            nxt = half + (half - full) / 15.0  # local Richardson extrapolation
            if np.max(np.abs(nxt)) > blowup_threshold:
                status = BLOWUP_DETECTED
                break
            t = stop_at if landing else t + h_try
            x = nxt
            if targets is None or landing:
                times.append(t)
                states.append(x.copy())
                if targets is not None:
                    next_target += 1
            if np.max(np.abs(x)) > 10.0 * scale0:
                grown_steps += 1
                if grown_steps > stall_steps:
                    status = BLOWUP_DETECTED
                    break
            growth = 4.0 if err == 0 else min(4.0, max(0.2, 0.9 * err ** -0.2))
            # a step clipped to hit a sample time must not shrink the next one
            h = max(h, h_try * growth) if landing else h_try * growth
        else:
            h = h_try * max(0.2, 0.9 * err ** -0.2) if math.isfinite(err) else 0.2 * h_try
            if h < h_min:
                grown = np.max(np.abs(x)) > 10.0 * scale0
                status = BLOWUP_DETECTED if grown else STEP_UNDERFLOW
                break
    else:
        raise TokenDynError(f"integrate_adaptive: exceeded {max_steps} steps")

    if status != COMPLETED and times[-1] != t:
        times.append(t)
        states.append(x.copy())

    rec = TrajectoryRecord(times=np.array(times), states=np.array(states), status=status)
    report = BlowupReport(detected=False)
    if status == BLOWUP_DETECTED:
        t = float(t)
        rec.blowup_time = t
        flat = np.abs(x).reshape(x.shape[0], -1) if x.ndim == 2 else np.abs(x).reshape(1, -1)
        d, l = np.unravel_index(int(np.argmax(flat)), flat.shape)
        report = BlowupReport(detected=True, blowup_time=t, trigger=(int(l), int(d)))
    if with_attention and rhs is None:
        _attach_attention(params, rec)
    return rec, report


@dataclass(frozen=True)
class DepthSeries:
    """Per-block token norms from ``depth_iterate``; ``norms`` is (blocks+1, L).

    ``final_state`` is the last state that passed the blow-up check.
    """

    norms: np.ndarray
    status: str
    blocks_completed: int
    final_state: np.ndarray


def depth_iterate(
    params, x0, n_blocks, step=1.0, skip=True, blowup_threshold=DEFAULT_BLOWUP_THRESHOLD
):
    """Push tokens through ``n_blocks`` identical S6 blocks.

    With ``skip`` each block is a residual update ``x + step * S6(x)`` (the
    explicit Euler discretization of the ODE); without it the block output
    replaces the input.
    """
    if n_blocks < 1:
        raise TokenDynError("n_blocks must be >= 1")
    if not step > 0:
        raise TokenDynError("step must be positive")
    x = as_tokens(x0, params.D)
    norms = [np.linalg.norm(x, axis=0)]
    status = COMPLETED
    done = 0
    for _ in range(n_blocks):
        y = s6_forward_convolutional(params, x)
        nxt = x + step * y if skip else y
        if not np.all(np.abs(nxt) <= blowup_threshold):
            status = BLOWUP_DETECTED
            break
        x = nxt
        done += 1
        norms.append(np.linalg.norm(x, axis=0))
    return DepthSeries(
        norms=np.array(norms), status=status, blocks_completed=done, final_state=x
    )
