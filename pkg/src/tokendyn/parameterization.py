"""Input/output projections with a prescribed eigenvalue sign pattern.

With S_C = L^T and S_B = diag(d) L^T for a unit lower-triangular L, the
input-output matrix S_C^T S_B = L diag(d) L^T is symmetric and, by
Sylvester's law of inertia, has exactly as many positive (negative)
eigenvalues as d has positive (negative) entries. Taking
d = signs * softplus(d_raw) keeps every entry away from zero.

The construction forces N = D.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, TokenDynError
from .linalg import as_matrix, eigh, sym_part
from .s6 import S6Params, softplus

POSITIVE = "positive"
NEGATIVE = "negative"
MIXED = "mixed"
REGIMES = (POSITIVE, NEGATIVE, MIXED)

D_RAW_FLOOR = -30.0
ZERO_EIG_RTOL = 1e-12


@dataclass(frozen=True)
class LdlFactors:
    L_unit: np.ndarray
    d_raw: np.ndarray
    signs: np.ndarray

    def __post_init__(self):
        L = as_matrix(self.L_unit, "L_unit")
        D = L.shape[0]
        d_raw = np.atleast_1d(np.asarray(self.d_raw, dtype=np.float64))
        signs = np.atleast_1d(np.asarray(self.signs, dtype=np.float64))
        if L.shape != (D, D) or d_raw.shape != (D,) or signs.shape != (D,):
            raise DimensionError("L_unit must be D x D with d_raw and signs of length D")
        if np.any(np.diag(L) != 1.0) or np.any(np.triu(L, 1) != 0.0):
            raise TokenDynError("L_unit must be unit lower-triangular")
        if not np.all(np.isin(signs, (-1.0, 1.0))):
            raise TokenDynError("signs must contain only +1 and -1")
        object.__setattr__(self, "L_unit", L)
        object.__setattr__(self, "d_raw", d_raw)
        object.__setattr__(self, "signs", signs)

    @property
    def D(self):
        return self.L_unit.shape[0]

    def diagonal(self):
        """The signed diagonal signs * softplus(max(d_raw, -30))."""
        return self.signs * softplus(np.maximum(self.d_raw, D_RAW_FLOOR))


def regime_signs(D, regime):
    """Sign vector for a regime; ``mixed`` puts ceil(D/2) plus signs first."""
    if regime == POSITIVE:
        return np.ones(D)
    if regime == NEGATIVE:
        return -np.ones(D)
    if regime == MIXED:
        n_pos = (D + 1) // 2
        return np.concatenate([np.ones(n_pos), -np.ones(D - n_pos)])
    raise TokenDynError(f"unknown regime {regime!r}; expected one of {REGIMES}")


def random_ldl(rng, D, regime, scale=None):
    """Random factors: strictly-lower entries N(0, scale^2), d_raw ~ N(0, 1).

    ``scale`` defaults to 1/sqrt(D), which keeps L well conditioned.
    """
    scale = 1.0 / np.sqrt(D) if scale is None else scale
    L = np.eye(D) + np.tril(rng.standard_normal((D, D)) * scale, -1)
    return LdlFactors(L_unit=L, d_raw=rng.standard_normal(D), signs=regime_signs(D, regime))


def ldl_build(factors):
    """Return (S_B, S_C) = (diag(d) L^T, L^T)."""
    LT = factors.L_unit.T
    return factors.diagonal()[:, None] * LT, LT.copy()


def spectrum_signs(S_B, S_C):
    """Signs (+1, -1 or 0) of the eigenvalues of sym(S_C^T S_B), descending.

    Eigenvalues with |lambda| < 1e-12 ||sym||_F count as zero.
    """
    S_B = as_matrix(S_B, "S_B")
    S_C = as_matrix(S_C, "S_C")
    if S_B.shape != S_C.shape:
        raise DimensionError("S_B and S_C must have the same shape")
    sym = sym_part(S_C.T @ S_B)
    eig = eigh(sym).eigenvalues
    tol = ZERO_EIG_RTOL * np.linalg.norm(sym)
    return [0 if abs(v) < tol else (1 if v > 0 else -1) for v in eig]


def params_from_ldl(factors, S_Delta, a):
    """An S6 layer whose projections come from ``ldl_build``."""
    S_B, S_C = ldl_build(factors)
    a = np.broadcast_to(np.asarray(a, dtype=np.float64), (factors.D,))
    return S6Params(a=a, S_Delta=S_Delta, S_B=S_B, S_C=S_C)
