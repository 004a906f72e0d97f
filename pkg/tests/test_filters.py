import numpy as np
import pytest
from scipy.linalg import null_space

from lyapda.filters import (ExkfState, FilterConfig, FilterFailure, FilterState, error_tangent_les,
                            exkf_p0_scale, exkf_step, filter_step, gain, run_exkf, run_filter,
                            run_linear_observer)
from lyapda.lyapunov import compute_les, random_orthonormal
from lyapda.models import ModelSpec, ObservationProcess, l96_initial, linear_model, lorenz96
from lyapda.ode import rk4_step
from lyapda.qr import laplacian_observation, thin_qr


def test_gain_identity_observation(rng):
    q = random_orthonormal(5, 5, 3)
    np.testing.assert_allclose(gain(q, np.eye(5), 2.5), 2.5 * np.eye(5), atol=1e-13)


def test_gain_zero_scale(rng):
    assert np.all(gain(random_orthonormal(4, 2, 0), rng.standard_normal((3, 4)), 0.0) == 0.0)


def test_gain_rank_deficient_direction_contributes_nothing():
    q = np.array([[0.0], [1.0]])
    np.testing.assert_array_equal(gain(q, [[1.0, 0.0]], 3.0), np.zeros((2, 1)))


@pytest.mark.parametrize("seed", range(10))
def test_gain_norm_bound(seed):
    rng = np.random.default_rng(seed)
    d, k, s = 7, int(rng.integers(1, 8)), int(rng.integers(1, 8))
    q = random_orthonormal(d, k, seed)
    h = rng.standard_normal((s, d))
    p = rng.uniform(0.1, 5)
    assert np.linalg.norm(gain(q, h, p), 2) <= p * np.linalg.norm(h, 2) * (1 + 1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_gain_upper_triangular_structure(seed):
    rng = np.random.default_rng(100 + seed)
    d, k, s, p = 8, int(rng.integers(1, 6)), int(rng.integers(1, 6)), 3.0
    q = random_orthonormal(d, k, seed)
    h = rng.standard_normal((s, d))
    full = np.hstack([q, null_space(q.T)])
    m = full.T @ gain(q, h, p) @ h @ full
    assert np.abs(m[k:, :]).max() <= 1e-10
    rt = thin_qr(h.T @ h @ q).r
    np.testing.assert_allclose(m[:k, :k], p * rt, atol=1e-10)


def _scalar(a):
    return linear_model(np.array([[a]]))


def test_filter_step_p_zero_is_free_flow(rng):
    model = lorenz96(8)
    x = l96_initial(8)
    st = FilterState(x, random_orthonormal(8, 3, 0))
    out = filter_step(model, laplacian_observation(8, 3), rng.standard_normal(3), st, 0.0, 0.01)
    np.testing.assert_array_equal(out.x, rk4_step(model.rhs, 0.0, x, 0.01))
    assert np.abs(out.q.T @ out.q - np.eye(3)).max() <= 1e-12


def test_filter_step_scalar_error_halves():
    model = _scalar(1.0)
    st = FilterState(np.array([2.0]), np.ones((1, 1)))
    y = lambda t: np.array([np.exp(t)])
    dt = 0.001
    errs = {}
    marks = {int(round(j * np.log(2) / dt)): j for j in range(1, 5)}
    for n in range(1, max(marks) + 1):
        st = filter_step(model, [[1.0]], y, st, 2.0, dt)
        if n in marks:
            errs[marks[n]] = st.x[0] - np.exp(st.t)
    for j, e in errs.items():
        t = round(j * np.log(2) / dt) * dt
        assert e == pytest.approx(np.exp(-t), rel=1e-6)
        assert e == pytest.approx(0.5 ** j, rel=2e-3)


def test_run_filter_neutral_when_started_on_truth():
    z0 = l96_initial(18)
    r = run_filter(lorenz96(18), ObservationProcess(laplacian_observation(18, 8)), z0, z0,
                   FilterConfig(t_end=20.0))
    assert np.all(r.error_norms == 0.0)
    assert np.array_equal(r.final_state, r.truth)


def test_filter_matches_generic_linear_model():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((4, 4)) * 0.5
    h = rng.standard_normal((2, 4))
    z0, x0 = rng.standard_normal(4), rng.standard_normal(4)
    cfg = FilterConfig(p=2.0, k=2, t_end=10.0)
    generic = ModelSpec(4, lambda t, z: a @ z, lambda t, z: a, "generic")
    r1 = run_filter(generic, ObservationProcess(h), z0, x0, cfg)
    r2 = run_linear_observer(a, h, z0, x0, cfg)
    np.testing.assert_allclose(r1.error_norms, r2.error_norms, atol=1e-12)
    np.testing.assert_allclose(r1.final_state, r2.final_state, atol=1e-12)


def _component_rates(a, h, k, p, x0, t1=10.0, t2=20.0):
    errs = []
    for t_end in (t1, t2):
        r = run_linear_observer(a, h, np.zeros(len(x0)), x0, FilterConfig(p=p, k=k, t_end=t_end))
        errs.append(np.abs(r.final_state - r.truth))
    return np.log(errs[1] / errs[0]) / (t2 - t1)


def test_linear_observer_rates_diag():
    rates = _component_rates(np.diag([1.0, -1.0]), [[1.0, 0.0]], 1, 3.0, np.array([1.0, 1.0]))
    np.testing.assert_allclose(rates, [-2.0, -1.0], atol=0.02)


def test_linear_observer_skew_full_observation():
    a = np.array([[0.0, 1.5], [-1.5, 0.0]])
    r = run_linear_observer(a, np.eye(2), np.zeros(2), np.array([1.0, 0.5]),
                            FilterConfig(p=1.0, k=2, t_end=10.0))
    rate = np.log(r.error_norms[-1] / r.error_norms[0]) / 10.0
    assert rate == pytest.approx(-1.0, abs=1e-6)


def test_linear_observer_zero_truth():
    r = run_linear_observer(np.diag([1.0, -1.0]), [[1.0, 0.0]], np.zeros(2),
                            np.array([0.3, -0.2]), FilterConfig(p=3.0, k=1, t_end=40.0))
    assert np.all(r.truth == 0.0)
    assert r.final_error < 1e-15


def test_lti_dichotomy():
    a = np.diag([1.0, -1.0])
    cfg = FilterConfig(p=3.0, k=1, t_end=20.0)
    good = run_linear_observer(a, [[1.0, 0.0]], np.ones(2), np.array([2.0, 0.0]), cfg)
    bad = run_linear_observer(a, [[0.0, 1.0]], np.ones(2), np.array([2.0, 0.0]), cfg)
    assert good.final_error < 1e-7 and good.converged_at is not None
    assert bad.final_error > 1e7 and bad.converged_at is None


def test_filter_rejects_bad_config():
    with pytest.raises(ValueError):
        FilterConfig(p=-1.0)
    with pytest.raises(ValueError):
        run_filter(lorenz96(8), ObservationProcess(np.eye(8)), l96_initial(8), l96_initial(8),
                   FilterConfig(k=9))
    with pytest.raises(ValueError):
        run_filter(lorenz96(8), ObservationProcess(np.eye(7)), l96_initial(8), l96_initial(8),
                   FilterConfig(k=2))


def test_run_result_helpers(tmp_path):
    r = run_linear_observer(np.diag([-1.0]), [[1.0]], np.zeros(1), np.ones(1),
                            FilterConfig(p=1.0, k=1, t_end=10.0, tol=1e-3, record_every=10))
    assert r.converged_at == pytest.approx(3.5, abs=0.11)
    assert r.error_at(5.0) == pytest.approx(np.exp(-10.0), rel=1e-6)
    r.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "t,err_norm"


def test_error_les_p_zero_equals_model_les():
    model, z0 = lorenz96(8), l96_initial(8)
    ref = compute_les(model, z0, 3, 50.0, 0.01, q0_seed=4, burn_in=20)
    err = error_tangent_les(model, laplacian_observation(8, 3), 0.0, 3, 3, z0, 50.0, 0.01,
                            q0_seed=7, w0_seed=4, burn_in=20)
    np.testing.assert_allclose(err.values, ref.values, atol=1e-8)


def test_error_les_linear_case():
    # A - L H = diag(1 - p, -1) once Q has aligned with e1
    err = error_tangent_les(linear_model(np.diag([1.0, -1.0])), [[1.0, 0.0]], 3.0, 1, 2,
                            np.ones(2), 200.0, 0.01, burn_in=10)
    np.testing.assert_allclose(err.values, [-1.0, -2.0], atol=1e-3)


@pytest.mark.slow
def test_l96_single_member_converges():
    z0 = l96_initial(18)
    x0 = z0 + 0.1 * np.random.default_rng(0).standard_normal(18)
    r = run_filter(lorenz96(18), ObservationProcess(laplacian_observation(18, 8)), z0, x0,
                   FilterConfig(p=10.0, k=8, t_end=200.0, stop_below=1e-10))
    assert r.converged_at is not None and r.converged_at < 200.0


# ------------------------------------------------------------------ ExKF

def test_p0_scale():
    assert exkf_p0_scale(18, 0.01) == pytest.approx(138.888, rel=1e-4)


def test_scalar_riccati_fixed_point():
    a, c = 0.7, 2.0
    model = _scalar(a)
    st = ExkfState(np.array([0.0]), np.array([[5.0]]))
    for _ in range(4000):
        st = exkf_step(model, [[1.0]], [[c]], np.array([0.0]), st, 0.01)
    assert st.p_cov[0, 0] == pytest.approx(2 * a / c, abs=1e-4)
    assert a - st.p_cov[0, 0] * c == pytest.approx(-a, abs=2e-4)


def test_unobserved_zero_dynamics_keeps_covariance(rng):
    m = rng.standard_normal((3, 3))
    p0 = m @ m.T
    st = ExkfState(np.zeros(3), p0)
    for _ in range(100):
        st = exkf_step(linear_model(np.zeros((3, 3))), np.zeros((1, 3)), [[1.0]], np.zeros(1),
                       st, 0.01)
    np.testing.assert_allclose(st.p_cov, 0.5 * (p0 + p0.T), atol=1e-14)


def test_exkf_twin_on_truth_is_exact_and_symmetric():
    z0 = l96_initial(8)
    h = laplacian_observation(8, 4)
    r = run_exkf(lorenz96(8), ObservationProcess(h), z0, z0, 10.0, t_end=2.0, record_every=100)
    assert np.all(r.error_norms == 0.0)
    assert r.extra["max_asymmetry"] <= 1e-10


def test_exkf_psd_failure_reported():
    # an explicit step far beyond the Riccati stability limit overshoots P
    with pytest.raises(FilterFailure, match="t="):
        exkf_step(_scalar(0.0), [[1.0]], [[1.0]], np.zeros(1),
                  ExkfState(np.zeros(1), np.array([[100.0]])), 0.1)


def test_exkf_noise_free_converges_short():
    z0 = l96_initial(18)
    x0 = z0 + 0.01 * np.random.default_rng(1).standard_normal(18)
    r = run_exkf(lorenz96(18), ObservationProcess(laplacian_observation(18, 8)), z0, x0,
                 exkf_p0_scale(18, 0.01), t_end=5.0, record_every=100)
    assert r.final_error < r.error_norms[0]
    assert r.extra["min_eig_ratio"] > -1e-5
