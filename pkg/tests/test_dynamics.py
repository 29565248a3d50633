import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tokendyn import dynamics as dy
from tokendyn import fixtures
from tokendyn.errors import DomainError, TokenDynError, UnsupportedDimensionError
from tokendyn.parameterization import params_from_ldl, random_ldl
from tokendyn.s6 import S6Params, softplus


def double_loop_drift(mu, s_delta, a, x):
    """Direct transcription of the one-channel drift as two nested sums."""
    L = len(x)
    step = [softplus(s_delta * v) for v in x]
    self_term, coupling = [], []
    for l in range(L):
        self_term.append(mu * x[l] ** 3 * step[l])
        g = 0.0
        for j in range(l):
            decay = sum(step[k] for k in range(j + 1, l + 1))
            g += mu * x[j] ** 2 * step[j] * math.exp(-a * decay)
        coupling.append(g * x[l])
    return np.array(self_term), np.array(coupling)


class TestRhs:
    def test_origin_is_equilibrium(self, rng):
        p = S6Params.random(rng, 3, 4)
        np.testing.assert_array_equal(dy.ode_rhs(p, np.zeros((3, 6))), 0.0)

    def test_single_token(self):
        assert dy.ode_rhs(S6Params.scalar(1.0, 0.0, 1.0), [1.0])[0, 0] == pytest.approx(math.log(2))

    def test_rejects_nonfinite(self):
        with pytest.raises(DomainError):
            dy.ode_rhs(S6Params.scalar(1.0, 0.0, 1.0), [np.inf])

    def test_decomposition_identity(self, rng):
        for _ in range(100):
            p = S6Params.scalar(rng.normal(), rng.normal(), abs(rng.normal()) + 0.1)
            x = rng.standard_normal(int(rng.integers(1, 12)))
            self_term, coupling = dy.drift_decomposition(p, x)
            np.testing.assert_allclose(self_term + coupling, dy.ode_rhs(p, x)[0], atol=1e-12)

    def test_first_token_uncoupled(self, rng):
        _, coupling = dy.drift_decomposition(S6Params.scalar(0.7, 0.3, 1.0), rng.standard_normal(5))
        assert coupling[0] == 0.0

    def test_negative_mu_couples_inward(self, rng):
        x = np.abs(rng.standard_normal(6)) + 0.1
        _, coupling = dy.drift_decomposition(S6Params.scalar(-1.2, 0.4, 0.8), x)
        assert np.all(coupling <= 0)

    def test_matches_double_loop(self):
        fx = fixtures.slow_divergence_example()
        got = dy.drift_decomposition(fx.params, fx.x0)
        want = double_loop_drift(1.79, -0.71, 1.80, fx.x0[0])
        np.testing.assert_allclose(got[0], want[0], rtol=1e-13)
        np.testing.assert_allclose(got[1], want[1], rtol=1e-12)

    def test_decomposition_needs_one_channel(self, rng):
        with pytest.raises(UnsupportedDimensionError):
            dy.drift_decomposition(S6Params.random(rng, 2, 2), np.ones((2, 3)))


class TestSnapshots:
    def test_linear(self):
        np.testing.assert_allclose(dy.snapshot_times(1.0, 4), [0.25, 0.5, 0.75, 1.0])

    def test_geometric(self):
        ts = dy.snapshot_times(1e4, 5, "geometric", 1.0)
        np.testing.assert_allclose(ts, [1, 10, 100, 1e3, 1e4])
        assert ts[-1] == 1e4

    def test_bad_policy(self):
        with pytest.raises(TokenDynError):
            dy.snapshot_times(1.0, 3, "cubic")


class TestFixedStep:
    def test_zero_state_stays_zero(self, rng):
        rec = dy.integrate_fixed(S6Params.random(rng, 2, 3), np.zeros((2, 4)), 1.0, 0.1)
        assert rec.status == dy.COMPLETED
        np.testing.assert_array_equal(rec.states, 0.0)

    def test_convergence_monotone(self):
        fx = fixtures.convergence_example()
        rec = dy.integrate_fixed(fx.params, fx.x0, 10.0, 1e-3, sample_every=100)
        assert np.all(np.diff(np.abs(rec.states[:, 0, :]), axis=0) < 0)
        assert rec.times[-1] == 10.0

    def test_invalid_step(self):
        p = S6Params.scalar(1.0, 0.0, 1.0)
        with pytest.raises(TokenDynError):
            dy.integrate_fixed(p, [1.0], 1.0, 0.0)
        with pytest.raises(TokenDynError):
            dy.integrate_fixed(p, [1.0], -1.0, 0.1)

    def test_rk4_order(self):
        fx = fixtures.convergence_example()
        final = [dy.integrate_fixed(fx.params, fx.x0, 2.0, h).states[-1] for h in (0.1, 0.05, 0.025)]
        order = math.log2(np.abs(final[0] - final[1]).max() / np.abs(final[1] - final[2]).max())
        assert order >= 3.8

    def test_attention_snapshots(self):
        fx = fixtures.convergence_example()
        rec = dy.integrate_fixed(fx.params, fx.x0, 1.0, 0.01, sample_every=10, with_attention=True)
        assert rec.attention.shape == (len(rec.times), 1, 10, 10)

    def test_backend_parity(self, backend):
        fx = fixtures.fast_divergence_example()
        p = fx.params
        args = (fx.x0, p.io_matrix, p.S_Delta, p.a, 1e-3, 400, np.arange(0, 401, 50), 1e8)
        from tokendyn import _pykernels

        got, ref = backend.rk4_run(*args), _pykernels.rk4_run(*args)
        np.testing.assert_allclose(got[0], ref[0], rtol=1e-12)
        assert got[2] == ref[2]

    def test_fixed_step_blowup(self):
        rec = dy.integrate_fixed(S6Params.scalar(1.0, 0.0, 1.0), [1.0], 2.0, 1e-3)
        assert rec.status == dy.BLOWUP_DETECTED
        # x' = ln2 x^3 blows up at 1/(2 ln 2); a fixed step lags by O(h)
        assert abs(rec.blowup_time - 1 / (2 * math.log(2))) <= 2e-3
        assert np.all(np.isfinite(rec.states))


class TestAdaptive:
    def test_convergent_completes(self):
        fx = fixtures.convergence_example()
        rec, rep = dy.integrate_adaptive(fx.params, fx.x0, 20.0)
        assert not rep.detected and rec.status == dy.COMPLETED
        assert rec.times[-1] == 20.0

    def test_fast_divergence_detected(self):
        fx = fixtures.fast_divergence_example()
        rec, rep = dy.integrate_adaptive(fx.params, fx.x0, 1.0)
        assert rep.detected and 0 < rep.blowup_time < 1.0
        assert rep.trigger == (5, 0)
        assert np.all(np.isfinite(rec.states))

    def test_quadratic_blowup(self):
        rec, rep = dy.integrate_adaptive(None, np.array([[1.0]]), 2.0, rhs=lambda x: x * x)
        assert rep.detected
        assert 0.95 <= rep.blowup_time <= 1.0

    def test_agrees_with_fixed(self):
        fx = fixtures.convergence_example()
        rel_tol = dy.DEFAULT_REL_TOL
        rec, _ = dy.integrate_adaptive(fx.params, fx.x0, 5.0, rel_tol)
        ref = dy.integrate_fixed(fx.params, fx.x0, 5.0, 1e-3).states[-1]
        assert np.abs(rec.states[-1] - ref).max() <= 10 * rel_tol

    def test_lands_on_sample_times(self):
        fx = fixtures.convergence_example()
        ts = dy.snapshot_times(10.0, 7, "geometric", 0.01)
        rec, _ = dy.integrate_adaptive(fx.params, fx.x0, 10.0, sample_times=ts)
        np.testing.assert_array_equal(rec.times[1:], ts)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_sign_preservation(self, seed):
        rng = np.random.default_rng(seed)
        p = S6Params.scalar(-abs(rng.normal()) - 0.1, rng.normal(), abs(rng.normal()) + 0.1)
        x0 = rng.standard_normal((1, 6))
        rec, _ = dy.integrate_adaptive(p, x0, 5.0, 1e-6, sample_times=dy.snapshot_times(5.0, 20))
        assert rec.status == dy.COMPLETED
        assert np.all(np.sign(rec.states) == np.sign(x0))

    def test_blowup_bound_dominates(self, rng):
        from tokendyn.scenario import blowup_bound

        for _ in range(20):
            p = S6Params.scalar(rng.uniform(0.2, 2), rng.uniform(0.1, 1.5), rng.uniform(0.2, 2))
            x0 = rng.uniform(0.3, 1.5, size=(1, 6))
            _, rep = dy.integrate_adaptive(p, x0, 50.0, 1e-6)
            assert rep.detected
            assert rep.blowup_time <= 1.1 * blowup_bound(p, x0)[1]


class TestRecord:
    def test_rejects_unsorted_times(self):
        with pytest.raises(TokenDynError):
            dy.TrajectoryRecord(times=[0.0, 0.0], states=np.zeros((2, 1, 1)))

    def test_blowup_time_defaults_to_last(self):
        rec = dy.TrajectoryRecord(times=[0.0, 0.5], states=np.ones((2, 3)), status=dy.BLOWUP_DETECTED)
        assert rec.blowup_time == 0.5 and rec.D == 1 and rec.L == 3


class TestDepth:
    def test_zero(self, rng):
        ds = dy.depth_iterate(S6Params.random(rng, 2, 2), np.zeros((2, 3)), 5)
        np.testing.assert_array_equal(ds.norms, 0.0)

    def test_euler_limit(self):
        fx = fixtures.convergence_example()
        ref = dy.integrate_fixed(fx.params, fx.x0, 1.0, 1e-3).states[-1]
        errs = [np.abs(dy.depth_iterate(fx.params, fx.x0, n, step=1.0 / n).final_state - ref).max()
                for n in (100, 200, 400)]
        assert errs[2] < errs[1] < errs[0]
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        np.testing.assert_allclose(ratios, 2.0, rtol=0.05)

    def test_negative_definite_ldl_contracts(self):
        rng = np.random.default_rng(7)
        p = params_from_ldl(random_ldl(rng, 3, "negative"), 0.3 * rng.standard_normal((3, 3)), 1.0)
        ds = dy.depth_iterate(p, rng.standard_normal((3, 5)), 40, step=0.1)
        assert ds.status == dy.COMPLETED
        assert np.all(np.diff(ds.norms[1:], axis=0) <= 0)

    def test_without_skip(self, rng):
        p = S6Params.random(rng, 2, 2)
        x = rng.standard_normal((2, 3))
        from tokendyn.s6 import s6_forward_convolutional

        ds = dy.depth_iterate(p, x, 1, skip=False)
        np.testing.assert_allclose(ds.final_state, s6_forward_convolutional(p, x))
