import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tokendyn import reorder as ro
from tokendyn.errors import DegeneratePointError, DimensionError, TokenDynError
from tokendyn.s6 import S6Params, s6_forward_recurrent


def distinct_scores(rng, L):
    while True:
        s = rng.standard_normal(L)
        if L < 2 or np.min(np.diff(np.sort(s))) > 1e-3:
            return s


class TestParams:
    @pytest.mark.parametrize("kw", [{"tau": 0.0}, {"p": 0.5}, {"order": "random"}])
    def test_invalid(self, kw):
        with pytest.raises(TokenDynError):
            ro.ReorderParams(K=[1.0], **kw)


class TestScores:
    def test_zero_direction(self, rng):
        s = ro.importance_scores(rng.standard_normal((3, 3)), np.zeros(3), rng.standard_normal((3, 5)))
        np.testing.assert_array_equal(s, 0.0)

    def test_hand_values(self):
        np.testing.assert_array_equal(ro.importance_scores([[-1.0]], [2.0], [1.0, 2.0, 3.0]), [-2, -4, -6])

    def test_loop_oracle(self, rng):
        S, K, x = rng.standard_normal((4, 4)), rng.standard_normal(4), rng.standard_normal((4, 8))
        want = [sum(K[d] * sum(S[d, k] * x[k, l] for k in range(4)) for d in range(4)) for l in range(8)]
        np.testing.assert_allclose(ro.importance_scores(S, K, x), want, rtol=1e-13)

    def test_shape_mismatch(self, rng):
        with pytest.raises(DimensionError):
            ro.importance_scores(np.eye(2), [1.0, 1.0, 1.0], np.ones((2, 3)))


class TestSoftSort:
    def test_sorted_input_gives_identity(self):
        P = ro.softsort(np.array([3.0, 2.0, 1.0, -1.0]), ro.ReorderParams(K=[1.0], tau=1e-6))
        np.testing.assert_array_equal(P.argmax(axis=1), np.arange(4))

    def test_closed_form_row(self):
        P = ro.softsort(np.array([1.0, 3.0, 2.0]), ro.ReorderParams(K=[1.0]))
        z = np.array([-2.0, 0.0, -1.0])
        np.testing.assert_allclose(P[0], np.exp(z) / np.exp(z).sum(), rtol=1e-15)

    def test_ties(self):
        P = ro.softsort(np.array([1.0, 1.0]), ro.ReorderParams(K=[1.0]))
        np.testing.assert_array_equal(P, 0.5)

    def test_ascending(self):
        P = ro.softsort(np.array([0.2, -1.0, 3.0]), ro.ReorderParams(K=[1.0], tau=1e-6, order="ascending"))
        np.testing.assert_array_equal(P.argmax(axis=1), [1, 0, 2])

    @settings(max_examples=50)
    @given(arrays(np.float64, st.integers(1, 32), elements=st.floats(-100, 100)), st.floats(0.01, 10))
    def test_row_stochastic(self, s, tau):
        P = ro.softsort(s, ro.ReorderParams(K=[1.0], tau=tau))
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(P >= 0) and np.all(P <= 1)

    @given(arrays(np.float64, 8, elements=st.floats(-3, 3)), st.floats(-10, 10))
    def test_shift_invariance(self, s, c):
        rp = ro.ReorderParams(K=[1.0], tau=0.5, p=2.0)
        np.testing.assert_allclose(ro.softsort(s + c, rp), ro.softsort(s, rp), atol=1e-12)

    def test_hard_limit(self, rng):
        rp = ro.ReorderParams(K=[1.0], tau=1e-6)
        for _ in range(200):
            s = distinct_scores(rng, int(rng.integers(1, 33)))
            perm = sorted(range(len(s)), key=lambda i: -s[i])
            np.testing.assert_array_equal(ro.softsort(s, rp).argmax(axis=1), perm)


class TestReorderTokens:
    def test_identity(self, rng):
        x = rng.standard_normal((2, 5))
        np.testing.assert_array_equal(ro.reorder_tokens(x, np.eye(5)), x)

    def test_hard_permutation(self, rng):
        x = rng.standard_normal((3, 6))
        perm = rng.permutation(6)
        np.testing.assert_array_equal(ro.reorder_tokens(x, np.eye(6)[perm]), x[:, perm])

    def test_convex_combination(self, rng):
        x = rng.standard_normal((3, 7))
        P = ro.softsort(rng.standard_normal(7), ro.ReorderParams(K=[1.0]))
        xr = ro.reorder_tokens(x, P)
        assert np.all(xr <= x.max(axis=1, keepdims=True) + 1e-12)
        assert np.all(xr >= x.min(axis=1, keepdims=True) - 1e-12)


class TestJacobian:
    def test_single_token(self):
        np.testing.assert_array_equal(ro.softsort_jacobian(np.array([0.3]), ro.ReorderParams(K=[1.0])), 0.0)

    def test_two_tokens_fd(self):
        rp = ro.ReorderParams(K=[1.0])
        s = np.array([2.0, 1.0])
        J = ro.softsort_jacobian(s, rp)
        eps = 1e-6
        for k in range(2):
            e = np.zeros(2)
            e[k] = eps
            fd = (ro.softsort(s + e, rp) - ro.softsort(s - e, rp)) / (2 * eps)
            np.testing.assert_allclose(J[:, :, k], fd, atol=1e-7)

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0])
    def test_powers(self, rng, p):
        rp = ro.ReorderParams(K=[1.0], tau=0.7, p=p)
        s = distinct_scores(rng, 6)
        J = ro.softsort_jacobian(s, rp)
        for i in range(6):
            for j in range(6):
                err = ro.fd_gradcheck(lambda v: ro.softsort(v, rp)[i, j], J[i, j], s)
                assert err <= 1e-6

    def test_ties_rejected(self):
        with pytest.raises(DegeneratePointError):
            ro.softsort_jacobian(np.array([1.0, 1.0, 2.0]), ro.ReorderParams(K=[1.0]))


class TestGradcheck:
    def test_quadratic(self, rng):
        A = rng.standard_normal((4, 4))
        A = A + A.T
        x = rng.standard_normal(4)
        assert ro.fd_gradcheck(lambda v: 0.5 * v @ A @ v, A @ x, x, eps=1e-5) <= 1e-9

    def test_softsort_loss(self, rng):
        rp = ro.ReorderParams(K=[1.0])
        s = distinct_scores(rng, 5)
        y = rng.standard_normal(5)

        def loss(v):
            return float(np.sum((ro.softsort(v, rp) @ y) ** 2))

        def grad(v):
            P, J = ro.softsort(v, rp), ro.softsort_jacobian(v, rp)
            return np.einsum("i,ijk,j->k", 2 * (P @ y), J, y)

        assert ro.fd_gradcheck(loss, grad, s) <= 1e-5

    def test_second_order(self):
        f, df = np.sin, np.cos
        x = np.array([0.7])
        e1 = ro.fd_gradcheck(lambda v: f(v).sum(), df(x), x, eps=1e-3)
        e2 = ro.fd_gradcheck(lambda v: f(v).sum(), df(x), x, eps=5e-4)
        assert e1 / e2 == pytest.approx(4.0, rel=0.01)

    def test_eps_range(self):
        with pytest.raises(TokenDynError):
            ro.fd_gradcheck(np.sum, np.ones(2), np.zeros(2), eps=1e-2)


class TestReorderedForward:
    def test_already_ordered(self, rng):
        p = S6Params.random(rng, 2, 3)
        K = np.array([1.0, -0.5])
        x = rng.standard_normal((2, 6))
        s = ro.importance_scores(p.S_Delta, K, x)
        x = x[:, np.argsort(-s)]
        y = ro.reordered_s6_forward(p, ro.ReorderParams(K=K, tau=1e-6), x)
        np.testing.assert_allclose(y, s6_forward_recurrent(p, x), atol=1e-9)

    def test_shuffled(self, rng):
        p = S6Params.random(rng, 3, 4)
        K = rng.standard_normal(3)
        x = rng.standard_normal((3, 8))
        s = ro.importance_scores(p.S_Delta, K, x)
        y = ro.reordered_s6_forward(p, ro.ReorderParams(K=K, tau=1e-6), x)
        np.testing.assert_allclose(y, s6_forward_recurrent(p, x[:, np.argsort(-s, kind="stable")]), atol=1e-6)

    def test_zero_direction_averages(self, rng):
        p = S6Params.random(rng, 2, 2)
        x = rng.standard_normal((2, 5))
        trace = ro.reordered_s6_trace(p, ro.ReorderParams(K=np.zeros(2)), x)
        mean = np.repeat(x.mean(axis=1, keepdims=True), 5, axis=1)
        np.testing.assert_allclose(trace.reordered, mean, atol=1e-15)
        np.testing.assert_allclose(trace.y, s6_forward_recurrent(p, mean), atol=1e-12)
