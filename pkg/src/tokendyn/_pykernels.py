"""Pure numpy implementation of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same signature
and semantics. Arrays are float64 and C-contiguous; callers in ``_core``
take care of the conversion.
"""
import numpy as np

STATUS_COMPLETED = 0
STATUS_BLOWUP = 1


def softplus(u):
    return np.maximum(u, 0.0) + np.log1p(np.exp(-np.abs(u)))


def attention_rhs(x, M, sdelta, a, want_P):
    """Convolutional S6 output ``y`` and (optionally) the attention tensor.

    x: (D, L) tokens; M: (D, D) input-output matrix S_C^T S_B;
    sdelta: (D, D) step-size rows; a: (D,) positive decay rates.
    """
    D, L = x.shape
    # states on their way to a blow-up may overflow; the caller checks finiteness
    with np.errstate(over="ignore", invalid="ignore"):
        gram = x.T @ (M @ x)  # gram[l, j] = x_l^T M x_j
        step = softplus(sdelta @ x)  # (D, L)
        csum = np.cumsum(step, axis=1)
        diff = csum[:, :, None] - csum[:, None, :]  # sum_{k=j+1}^{l} step[d, k]
        lower = np.tri(L, dtype=bool)
        decay = np.where(lower, np.exp(-a[:, None, None] * np.where(lower, diff, 0.0)), 0.0)
        P = gram[None, :, :] * step[:, None, :] * decay
        y = np.einsum("dlj,dj->dl", P, x)
    return y, (P if want_P else None)


def recurrent_scan(abar, bbar, c, x):
    """h_dl = abar_dl h_{d,l-1} + bbar_dl x_dl, y_dl = c_l . h_dl, h_d0 = 0."""
    D, L = x.shape
    N = c.shape[1]
    y = np.empty((D, L))
    for d in range(D):
        h = np.zeros(N)
        for l in range(L):
            h = abar[d, l] * h + bbar[d, l] * x[d, l]
            y[d, l] = c[l] @ h
    return y


def rk4_run(x0, M, sdelta, a, h, n_steps, record_steps, threshold):
    """Classical RK4 with constant step on the token ODE.

    Records the state after every step index listed in ``record_steps``
    (sorted, index 0 is the initial state). Stops early when any component
    exceeds ``threshold`` in magnitude or goes non-finite; the last trusted
    step is then returned as ``last_step``.
    """

    def f(z):
        return attention_rhs(z, M, sdelta, a, False)[0]

    return rk4_loop(f, x0, h, n_steps, record_steps, threshold)


def rk4_loop(f, x0, h, n_steps, record_steps, threshold):
    """``rk4_run`` for an arbitrary right-hand side ``f(x) -> dx/dt``."""
    x = np.array(x0, dtype=np.float64)
    out = np.empty((len(record_steps),) + x.shape)
    steps = np.empty(len(record_steps), dtype=np.int64)
    n_rec = 0
    status = STATUS_COMPLETED
    last = 0

    if n_rec < len(record_steps) and record_steps[n_rec] == 0:
        out[n_rec] = x
        steps[n_rec] = 0
        n_rec += 1
    for k in range(1, n_steps + 1):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        nxt = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.abs(nxt) <= threshold):  # also catches nan
            status = STATUS_BLOWUP
            break
        x = nxt
        last = k
        while n_rec < len(record_steps) and record_steps[n_rec] == k:
            out[n_rec] = x
            steps[n_rec] = k
            n_rec += 1
    if status == STATUS_BLOWUP and (n_rec == 0 or steps[n_rec - 1] != last):
        out[n_rec] = x
        steps[n_rec] = last
        n_rec += 1
    return out[:n_rec], steps[:n_rec], status, last
