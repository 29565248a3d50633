"""Token reordering by learned importance scores.

Scores are s_l = <K, S_Delta x_l>. A SoftSort relaxation turns them into a
row-stochastic matrix P whose row i concentrates on the token holding the
i-th largest (or smallest) score; the layer then runs on ``x P^T``.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePointError, DimensionError, TokenDynError
from .s6 import as_tokens, s6_forward_recurrent

DESCENDING = "descending"
ASCENDING = "ascending"


@dataclass(frozen=True)
class ReorderParams:
    K: np.ndarray
    tau: float = 1.0
    p: float = 1.0
    order: str = DESCENDING

    def __post_init__(self):
        object.__setattr__(self, "K", np.atleast_1d(np.asarray(self.K, dtype=np.float64)))
        if not self.tau > 0:
            raise TokenDynError(f"tau must be positive, got {self.tau}")
        if not self.p >= 1:
            raise TokenDynError(f"p must be >= 1, got {self.p}")
        if self.order not in (DESCENDING, ASCENDING):
            raise TokenDynError(f"order must be {DESCENDING!r} or {ASCENDING!r}")


def importance_scores(S_Delta, K, x):
    """s_l = K . (S_Delta x_l) for every token; returns shape (L,)."""
    S_Delta = np.atleast_2d(np.asarray(S_Delta, dtype=np.float64))
    K = np.atleast_1d(np.asarray(K, dtype=np.float64))
    x = as_tokens(x)
    D = x.shape[0]
    if S_Delta.shape != (D, D) or K.shape != (D,):
        raise DimensionError(
            f"S_Delta {S_Delta.shape} and K {K.shape} do not match {D} channels"
        )
    return (S_Delta @ x).T @ K


def sort_permutation(s, order=DESCENDING):
    """Indices that sort ``s``; ``s[perm]`` is the sorted vector."""
    s = np.asarray(s, dtype=np.float64)
    key = -s if order == DESCENDING else s
    return np.argsort(key, kind="stable")


def _logits(s, params):
    perm = sort_permutation(s, params.order)
    diff = s[perm][:, None] - s[None, :]
    return -np.abs(diff) ** params.p / params.tau, perm, diff


def softsort(s, params):
    """Soft permutation: row i is softmax_j(-|s_sorted_i - s_j|^p / tau)."""
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    z, _, _ = _logits(s, params)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def reorder_tokens(x, P):
    x = as_tokens(x)
    P = np.asarray(P, dtype=np.float64)
    if P.shape != (x.shape[1], x.shape[1]):
        raise DimensionError(f"P has shape {P.shape}, expected {(x.shape[1],) * 2}")
    return x @ P.T


def softsort_jacobian(s, params):
    """Exact partials J[i, j, k] = dP_ij / ds_k at a point with distinct scores.

    The sort permutation is held fixed, as it is locally constant away from
    ties.
    """
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    L = s.shape[0]
    if len(np.unique(s)) != L:
        raise DegeneratePointError("softsort_jacobian needs pairwise distinct scores")
    P = softsort(s, params)
    _, perm, diff = _logits(s, params)
    # dz_ij/du_ij; zero on the self-match where diff is exactly 0
    G = -(params.p / params.tau) * np.abs(diff) ** (params.p - 1) * np.sign(diff)
    eye = np.eye(L)
    dz = G[:, :, None] * (eye[perm][:, None, :] - eye[None, :, :])
    mean_dz = np.einsum("im,imk->ik", P, dz)
    return P[:, :, None] * (dz - mean_dz[:, None, :])


def fd_gradcheck(f, grad, x, eps=1e-6):
    """Compare an analytic gradient with central differences.

    ``grad`` is either the gradient array at ``x`` or a callable returning it.
    Returns max_k |analytic_k - numeric_k| / (1 + |numeric_k|).
    """
    if not 1e-9 <= eps <= 1e-3:
        raise TokenDynError(f"eps must be in [1e-9, 1e-3], got {eps}")
    x = np.asarray(x, dtype=np.float64)
    analytic = np.asarray(grad(x) if callable(grad) else grad, dtype=np.float64)
    numeric = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e.flat[k] = eps
        numeric.flat[k] = (f(x + e) - f(x - e)) / (2.0 * eps)
    return float(np.max(np.abs(analytic - numeric) / (1.0 + np.abs(numeric))))


@dataclass(frozen=True)
class ReorderTrace:
    """Intermediate values of one reordered forward pass."""

    scores: np.ndarray
    P: np.ndarray
    reordered: np.ndarray
    y: np.ndarray = field(repr=False)


def reordered_s6_trace(params, rparams, x):
    x = as_tokens(x, params.D)
    s = importance_scores(params.S_Delta, rparams.K, x)
    P = softsort(s, rparams)
    xr = reorder_tokens(x, P)
    return ReorderTrace(scores=s, P=P, reordered=xr, y=s6_forward_recurrent(params, xr))


def reordered_s6_forward(params, rparams, x):
    """Score, soft-sort and reorder the tokens, then run the S6 scan."""
    return reordered_s6_trace(params, rparams, x).y
