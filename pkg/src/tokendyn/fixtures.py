"""Reference parameter sets for the three one-channel regimes and the
two-channel examples.

The convergence and slow-divergence sets are often quoted with negative
decay rates (a = -1.08, a = -1.80); the layer requires a > 0, so the
magnitudes are used.
"""
from dataclasses import dataclass

import numpy as np

from .s6 import S6Params


@dataclass(frozen=True)
class Fixture:
    name: str
    params: S6Params
    x0: np.ndarray
    expected: str  # regime label the fixture illustrates


def convergence_example():
    return Fixture(
        name="convergence_example",
        params=S6Params.scalar(mu=-1.58, s_delta=-0.17, a=1.08),
        x0=np.array([[-1.79, -0.34, 0.46, -1.25, 0.83, -0.83, 1.81, -1.16, 0.13, -0.19]]),
        expected="Convergence",
    )


def slow_divergence_example():
    return Fixture(
        name="slow_divergence_example",
        params=S6Params.scalar(mu=1.79, s_delta=-0.71, a=1.80),
        x0=np.array([[1.55, 2.84, 3.81, 4.57, 5.99, 6.94, 7.71, 8.96, 9.59, 10.75]]),
        expected="SlowDivergence",
    )


def fast_divergence_example():
    return Fixture(
        name="fast_divergence_example",
        params=S6Params.scalar(mu=0.76, s_delta=0.59, a=1.66),
        x0=np.array([[0.83, 0.91, 0.64, 0.78, 0.66, 0.99, 0.68, 0.72, 0.61, 0.90]]),
        expected="FastDivergence",
    )


def ordered_slow_divergence():
    """Slow divergence with S_Delta x_L0 <= ... <= S_Delta x_10 <= -r0."""
    return Fixture(
        name="ordered_slow_divergence",
        params=S6Params.scalar(mu=1.0, s_delta=-1.0, a=1.0),
        x0=np.array([[2.5, 3.0, 3.5, 4.0, 4.5]]),
        expected="SlowDivergence",
    )


# io_matrix, S_Delta, a, tokens (one row per token), reference eigenvalues of the symmetric part
_TWO_CHANNEL = {
    "negative": (
        [[-0.552679, -0.843293], [0.869146, -0.967042]],
        [[0.287585, 0.99662], [-0.201208, -0.964587]],
        0.370332,
        [[-1.47982, -0.228103], [-0.406453, 1.24415], [1.8491, -0.625385], [1.26989, -1.91216]],
        (-0.552276, -0.967445),
    ),
    "mixed": (
        [[-0.155283, 0.542694], [0.989821, 0.260748]],
        [[0.430263, 0.555071], [-0.654555, 0.422737]],
        0.573698,
        [[1.39902, 1.60628], [-0.342366, -0.845203], [0.616744, 1.63846], [-0.185335, -1.34566]],
        (0.846723, -0.741258),
    ),
    "positive": (
        [[0.981721, -0.803219], [-0.342524, 0.605171]],
        [[0.653732, -0.228578], [-0.960714, -0.495344]],
        0.997408,
        [[1.1932, -0.702409], [-1.49159, -0.735305], [1.21287, -0.816296], [-0.462258, 1.44549]],
        (1.39646, 0.190429),
    ),
}

TWO_CHANNEL_CASES = tuple(_TWO_CHANNEL)


def two_channel(case):
    """Two-channel example keyed by the sign pattern of its symmetric part.

    Returns the fixture and its reference eigenvalue pair (descending).
    """
    io, sd, a, tokens, eig = _TWO_CHANNEL[case]
    params = S6Params.from_io_matrix(io, sd, a)
    expected = "Convergence" if case == "negative" else "Divergence"
    fx = Fixture(name=f"two_channel_{case}", params=params, x0=np.array(tokens).T, expected=expected)
    return fx, eig


def one_channel_fixtures():
    return [convergence_example(), slow_divergence_example(), fast_divergence_example()]
