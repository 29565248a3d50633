"""The discrete selective state-space (S6) layer.

Tokens are stored as a ``(D, L)`` float64 array: column ``l`` is token
``x_l`` and row ``d`` is channel ``d``. The layer has scalar hidden matrices
``A_d = -a_d I_N`` and input-dependent step sizes
``Delta_d(u) = softplus(S_Delta[d] . u)``.

Two equivalent forward passes are provided: the recurrent scan over hidden
states and the convolutional ("hidden attention") form ``y_d = P_d x_d``.
"""
from dataclasses import dataclass

import numpy as np

from . import _core
from .errors import DimensionError, DomainError


def softplus(u):
    """ln(1 + e^u), evaluated as max(u, 0) + ln(1 + e^-|u|).

    Accepts scalars or arrays; never overflows for finite input.
    """
    if np.ndim(u) == 0:
        u = float(u)
        return max(u, 0.0) + float(np.log1p(np.exp(-abs(u))))
    u = np.asarray(u, dtype=np.float64)
    return np.maximum(u, 0.0) + np.log1p(np.exp(-np.abs(u)))


@dataclass(frozen=True)
class S6Params:
    """Learnable quantities of one S6 layer.

    Attributes
    ----------
    a : (D,) positive decay rates, ``A_d = -a[d] * I_N``.
    S_Delta : (D, D) step-size projection; row ``d`` is ``S_Delta,d``.
    S_B, S_C : (N, D) input and output projections.
    """

    a: np.ndarray
    S_Delta: np.ndarray
    S_B: np.ndarray
    S_C: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=np.float64)).copy()
        D = a.shape[0]
        S_Delta = np.asarray(self.S_Delta, dtype=np.float64).reshape(D, -1).copy()
        S_B = np.asarray(self.S_B, dtype=np.float64)
        S_C = np.asarray(self.S_C, dtype=np.float64)
        S_B = (S_B.reshape(-1, D) if S_B.ndim < 2 else S_B).copy()
        S_C = (S_C.reshape(-1, D) if S_C.ndim < 2 else S_C).copy()
        if a.ndim != 1 or D < 1:
            raise DimensionError("a must be a non-empty vector")
        if S_Delta.shape != (D, D):
            raise DimensionError(f"S_Delta must be {D}x{D}, got {S_Delta.shape}")
        if S_B.shape[1] != D or S_C.shape != S_B.shape or S_B.shape[0] < 1:
            raise DimensionError(
                f"S_B and S_C must both be N x {D}, got {S_B.shape} and {S_C.shape}"
            )
        for name, arr in (("a", a), ("S_Delta", S_Delta), ("S_B", S_B), ("S_C", S_C)):
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} has non-finite entries")
            arr.flags.writeable = False
        if np.any(a <= 0):
            raise DomainError("decay rates a_d must be positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "S_Delta", S_Delta)
        object.__setattr__(self, "S_B", S_B)
        object.__setattr__(self, "S_C", S_C)
        io = S_C.T @ S_B
        io.flags.writeable = False
        object.__setattr__(self, "_io", io)

    @property
    def D(self):
        return self.a.shape[0]

    @property
    def N(self):
        return self.S_B.shape[0]

    @property
    def io_matrix(self):
        """The D x D input-output matrix S_C^T S_B."""
        return self._io

    @classmethod
    def scalar(cls, mu, s_delta, a):
        """One-channel layer with S_C^T S_B = mu (N = 1, S_C = 1, S_B = mu)."""
        return cls(a=[a], S_Delta=[[s_delta]], S_B=[[mu]], S_C=[[1.0]])

    @classmethod
    def from_io_matrix(cls, io_matrix, S_Delta, a):
        """Layer with a prescribed input-output matrix (N = D, S_C = I, S_B = M)."""
        M = np.atleast_2d(np.asarray(io_matrix, dtype=np.float64))
        D = M.shape[0]
        a = np.broadcast_to(np.asarray(a, dtype=np.float64), (D,))
        return cls(a=a, S_Delta=S_Delta, S_B=M, S_C=np.eye(D))

    @classmethod
    def random(cls, rng, D, N):
        """Unit-normal projections, a_d drawn from |N(0, 1)| + 0.1."""
        return cls(
            a=np.abs(rng.standard_normal(D)) + 0.1,
            S_Delta=rng.standard_normal((D, D)),
            S_B=rng.standard_normal((N, D)),
            S_C=rng.standard_normal((N, D)),
        )


@dataclass(frozen=True)
class DiscretizedCoefficients:
    """Per-token discretization: abar (D, L), bbar (D, L, N), c (L, N)."""

    abar: np.ndarray
    bbar: np.ndarray
    c: np.ndarray


def as_tokens(x, D=None):
    """Return ``x`` as a finite (D, L) float64 array.

    A 1-D input is read as a one-channel sequence.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"tokens must be (D, L), got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise DimensionError("token sequence is empty (L = 0)")
    if D is not None and arr.shape[0] != D:
        raise DimensionError(f"tokens have {arr.shape[0]} channels, expected {D}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("tokens contain non-finite values")
    return np.ascontiguousarray(arr)


def delta(params, x_l):
    """Step sizes softplus(S_Delta,d . x_l) for every channel d."""
    x_l = np.asarray(x_l, dtype=np.float64).reshape(-1)
    if x_l.shape[0] != params.D:
        raise DimensionError(f"token has length {x_l.shape[0]}, expected {params.D}")
    if not np.all(np.isfinite(x_l)):
        raise DomainError("token contains non-finite values")
    return softplus(params.S_Delta @ x_l)


def step_sizes(params, x):
    """Delta_d(x_l) for all channels and tokens, shape (D, L)."""
    x = as_tokens(x, params.D)
    return softplus(params.S_Delta @ x)


def discretize(params, x):
    x = as_tokens(x, params.D)
    step = softplus(params.S_Delta @ x)
    abar = np.exp(-params.a[:, None] * step)
    Bx = (params.S_B @ x).T  # (L, N): S_B x_l
    bbar = step[:, :, None] * Bx[None, :, :]
    c = (params.S_C @ x).T
    return DiscretizedCoefficients(abar=abar, bbar=bbar, c=c)


def s6_forward_recurrent(params, x):
    """Run the recurrent scan; returns y with the same shape as x."""
    x = as_tokens(x, params.D)
    coef = discretize(params, x)
    return _core.recurrent_scan(coef.abar, coef.bbar, coef.c, x)


def hidden_attention(params, x):
    """Per-channel lower-triangular attention matrices, shape (D, L, L).

    P[d, l, l] = x_l^T M x_l Delta_d(x_l) and, for l > j,
    P[d, l, j] = x_l^T M x_j Delta_d(x_j) exp(-a_d sum_{k=j+1}^{l} Delta_d(x_k)),
    with M = S_C^T S_B.
    """
    x = as_tokens(x, params.D)
    _, P = _core.attention_rhs(x, params.io_matrix, params.S_Delta, params.a, True)
    return P


def s6_forward_convolutional(params, x):
    x = as_tokens(x, params.D)
    y, _ = _core.attention_rhs(x, params.io_matrix, params.S_Delta, params.a, False)
    return y
