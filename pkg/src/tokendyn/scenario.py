"""Regime classification for the token ODE.

For one channel the sign of mu = S_C^T S_B and the signs of S_Delta x_l0
decide between three regimes: convergence (mu < 0), slow divergence (mu > 0,
every S_Delta x_l0 < 0) and fast divergence (mu > 0, some S_Delta x_l0 > 0).
For several channels the same test is applied to the spectrum of the
symmetric part of S_C^T S_B; those labels are flagged as conjectural.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import NotApplicableError, PreconditionError, UnsupportedDimensionError
from .linalg import SymmetricSpectrum, eigh, sym_part
from .s6 import as_tokens, softplus

CONVERGENCE = "Convergence"
SLOW_DIVERGENCE = "SlowDivergence"
FAST_DIVERGENCE = "FastDivergence"
INDETERMINATE = "Indeterminate"

ZERO_EIG_RTOL = 1e-12


def _r0_residual(r):
    # 2 ln(1 + e^-r) - r e^-r / (1 + e^-r)
    return 2.0 * softplus(-r) - r / (1.0 + math.exp(r))


def find_r0(tol=1e-8):
    """Positive root of 2 ln(1+e^-r) - r e^-r/(1+e^-r), by bisection on [1, 4]."""
    if not 0 < tol <= 1e-2:
        raise ValueError(f"tol must be in (0, 1e-2], got {tol}")
    lo, hi = 1.0, 4.0
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if _r0_residual(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class ScenarioReport:
    """Outcome of :func:`classify`.

    ``mu`` is a float for one channel and a :class:`SymmetricSpectrum` of the
    symmetric part of S_C^T S_B otherwise. ``per_token_sdelta_sign`` holds the sign of
    S_Delta x_l0 per token (a list of per-channel signs when D > 1).
    ``blowup_bounds`` is set only for one-channel fast divergence; tokens the
    bound does not apply to carry ``inf``.
    """

    mu: float | SymmetricSpectrum
    per_token_sdelta_sign: list
    label: str
    conjectural: bool
    r0: float
    hypothesis_holds: bool
    blowup_bounds: list | None = None

    @property
    def display_label(self):
        return f"{self.label} (conjectural)" if self.conjectural else self.label

    def to_dict(self):
        if isinstance(self.mu, SymmetricSpectrum):
            mu = {
                "eigenvalues": [float(v) for v in self.mu.eigenvalues],
                "eigenvectors": self.mu.eigenvectors.tolist(),
            }
        else:
            mu = float(self.mu)
        bounds = None
        if self.blowup_bounds is not None:
            bounds = [None if math.isinf(b) else float(b) for b in self.blowup_bounds]
        return {
            "label": self.label,
            "conjectural": self.conjectural,
            "mu": mu,
            "per_token_sdelta_sign": self.per_token_sdelta_sign,
            "r0": self.r0,
            "hypothesis_holds": self.hypothesis_holds,
            "blowup_bounds": bounds,
        }

    @classmethod
    def from_dict(cls, data):
        mu = data["mu"]
        if isinstance(mu, dict):
            mu = SymmetricSpectrum(
                eigenvalues=np.array(mu["eigenvalues"], dtype=np.float64),
                eigenvectors=np.array(mu["eigenvectors"], dtype=np.float64),
            )
        bounds = data.get("blowup_bounds")
        if bounds is not None:
            bounds = [math.inf if b is None else b for b in bounds]
        return cls(
            mu=mu,
            per_token_sdelta_sign=data["per_token_sdelta_sign"],
            label=data["label"],
            conjectural=data["conjectural"],
            r0=data["r0"],
            hypothesis_holds=data["hypothesis_holds"],
            blowup_bounds=bounds,
        )


def _check_nonzero(x0):
    zero = np.all(x0 == 0.0, axis=0)
    if np.any(zero):
        idx = int(np.argmax(zero))
        raise PreconditionError(f"initial token {idx} is zero", token_index=idx)


def _sign(v):
    return int(np.sign(v))


def _divergence_label(proj):
    if np.any(proj > 0):
        return FAST_DIVERGENCE
    if np.any(proj == 0):
        return INDETERMINATE
    return SLOW_DIVERGENCE


def classify(params, x0):
    """Label (params, x0) as Convergence / SlowDivergence / FastDivergence.

    Raises ``PreconditionError`` (with ``token_index``) for a zero initial
    token. Exact ties (mu == 0, or no positive and some zero S_Delta x_l0)
    are reported as Indeterminate.
    """
    x0 = as_tokens(x0, params.D)
    _check_nonzero(x0)
    proj = params.S_Delta @ x0  # (D, L): S_Delta,d . x_l0
    r0 = find_r0(1e-8)

    if params.D == 1:
        mu = float(params.io_matrix[0, 0])
        proj = proj[0]
        signs = [_sign(v) for v in proj]
        if mu < 0:
            label = CONVERGENCE
        elif mu == 0:
            label = INDETERMINATE
        else:
            label = _divergence_label(proj)
        bounds = None
        if label == FAST_DIVERGENCE:
            bounds = [float(b) for b in blowup_bound(params, x0)[0]]
        return ScenarioReport(
            mu=mu,
            per_token_sdelta_sign=signs,
            label=label,
            conjectural=False,
            r0=r0,
            hypothesis_holds=slow_divergence_hypothesis(params, x0),
            blowup_bounds=bounds,
        )

    sym = sym_part(params.io_matrix)
    spectrum = eigh(sym)
    eig = spectrum.eigenvalues
    zero_tol = ZERO_EIG_RTOL * max(1.0, float(np.linalg.norm(sym)))
    if np.any(np.abs(eig) <= zero_tol) and not eig[0] > zero_tol:
        label = INDETERMINATE
    elif eig[0] < 0:
        label = CONVERGENCE
    else:
        label = _divergence_label(proj)
    signs = [[_sign(v) for v in proj[:, l]] for l in range(proj.shape[1])]
    return ScenarioReport(
        mu=spectrum,
        per_token_sdelta_sign=signs,
        label=label,
        conjectural=True,
        r0=r0,
        hypothesis_holds=False,
    )


def slow_divergence_hypothesis(params, x0):
    """True iff S_Delta x_L0 <= ... <= S_Delta x_10 <= -r0 (one channel)."""
    if params.D != 1:
        raise UnsupportedDimensionError("slow_divergence_hypothesis is defined for D = 1 only")
    proj = params.S_Delta[0, 0] * as_tokens(x0, 1)[0]
    if not proj[0] <= -find_r0(1e-8):
        return False
    return bool(np.all(proj[1:] <= proj[:-1]))


def blowup_bound(params, x0):
    """Upper bounds 1 / (2 mu Delta(x_l0) x_l0^2) on per-token blow-up times.

    Only tokens with S_Delta x_l0 >= 0 get a finite bound (there Delta never
    drops below Delta(x_l0) as |x_l| grows); the others are ``inf``. Returns ``(bounds, min(bounds))``.
    """
    if params.D != 1:
        raise UnsupportedDimensionError("blowup_bound is defined for D = 1 only")
    mu = float(params.io_matrix[0, 0])
    if mu <= 0:
        raise NotApplicableError("blow-up bounds need mu = S_C^T S_B > 0")
    x = as_tokens(x0, 1)[0]
    proj = params.S_Delta[0, 0] * x
    bounds = np.full(x.shape, math.inf)
    hit = proj >= 0
    bounds[hit] = 1.0 / (2.0 * mu * softplus(proj[hit]) * x[hit] ** 2)
    return bounds, float(np.min(bounds))
