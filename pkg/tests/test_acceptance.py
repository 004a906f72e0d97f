"""End-to-end acceptance checks; each test records one pass/fail line.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are listed in
the "acceptance criteria" section of the terminal summary.
"""

import numpy as np
import pytest
from scipy.linalg import null_space, subspace_angles
from scipy.stats import ortho_group

from lyapda.config import member_seed
from lyapda.detect import gramian, ltv_detectability, observability_matrix
from lyapda.filters import (ExkfState, FilterConfig, error_tangent_les, exkf_p0_scale,
                            exkf_step, gain, run_exkf, run_filter)
from lyapda.lyapunov import compute_les, count_nonnegative
from lyapda.models import (ObservationProcess, burgers, burgers_initial, l96_initial,
                           linear_model, lorenz96)
from lyapda.ode import IntegratorConfig, integrate
from lyapda.qr import laplacian_observation, thin_qr

pytestmark = pytest.mark.slow

D = 18


def _members(n, scale, seed=0, z0=None):
    z0 = l96_initial(D) if z0 is None else z0
    out = []
    for i in range(n):
        ms = member_seed(seed, i)
        x0 = z0 + scale * np.random.default_rng(ms).standard_normal(len(z0))
        out.append((ms, x0))
    return out


def test_c1_l96_spectrum(criterion):
    le = compute_les(lorenz96(D), l96_initial(D), 9, 3000.0, 0.01, burn_in=100)
    n_nonneg = count_nonnegative(le)
    lam7 = le.values[6]
    ok = n_nonneg == 6 and -0.06 <= lam7 <= 0.02
    criterion(1, ok, f"nonnegative = {n_nonneg} (want 6), lambda_7 = {lam7:.4f} "
                     f"(want [-0.06, 0.02])")
    assert ok


def test_c2_error_dynamics_exponent(criterion):
    h = laplacian_observation(D, 6)
    le = error_tangent_les(lorenz96(D), h, 10.0, 6, 3, l96_initial(D), 2000.0, 0.01)
    lead = le.values[0]
    ok = -0.12 <= lead <= -0.01
    criterion(2, ok, f"leading error exponent = {lead:.4f} (want [-0.12, -0.01])")
    assert ok


def test_c3_filter_convergence_k8(criterion):
    model, h, z0 = lorenz96(D), laplacian_observation(D, 8), l96_initial(D)
    conv = []
    for ms, x0 in _members(20, 0.1):
        cfg = FilterConfig(p=10.0, k=8, t_end=200.0, q0_seed=ms, stop_below=1e-10)
        r = run_filter(model, ObservationProcess(h), z0, x0, cfg)
        conv.append(np.inf if r.converged_at is None else r.converged_at)
    conv = np.array(conv)
    by200 = np.mean(conv <= 200.0)
    by100 = np.mean(conv <= 100.0)
    ok = by200 == 1.0 and by100 >= 0.9
    criterion(3, ok, f"converged by t=200: {by200:.0%} (want 100%), by t=100: {by100:.0%} "
                     f"(want >= 90%), latest {conv.max():.1f}")
    assert ok


def test_c4_sharpness(criterion):
    model, z0 = lorenz96(D), l96_initial(D)
    h = laplacian_observation(D, 5)
    rep = ltv_detectability(model, z0, h, 8, 1000.0, 0.01)
    best = []
    for ms, x0 in _members(5, 0.1, seed=4):
        cfg = FilterConfig(p=10.0, k=5, t_end=500.0, q0_seed=ms, stop_below=1e-3,
                           record_every=10)
        r = run_filter(model, ObservationProcess(h), z0, x0, cfg)
        best.append(r.error_norms.min())
    ok = (not rep.verdict) and min(best) >= 1e-3
    criterion(4, ok, f"verdict = {rep.verdict} (k_star = {rep.k_star}, rank H = {rep.h_rank}), "
                     f"smallest error by t=500 over 5 members = {min(best):.3g} (want >= 1e-3)")
    assert ok


def test_c5_burgers(criterion):
    d = D
    model, h, z0 = burgers(d), laplacian_observation(d, 11), burgers_initial(d, seed=0)
    traj = integrate(model.rhs, IntegratorConfig(0.01, 0.0, 400.0), z0, stride=100)
    energy = np.sum(traj.states ** 2, axis=1)
    drift = np.abs(energy / energy[0] - 1).max()
    finals, conv = [], []
    for ms, x0 in _members(20, 0.01, z0=z0):
        cfg = FilterConfig(p=20.0, k=11, t_end=400.0, q0_seed=ms, stop_below=1e-10,
                           record_every=10)
        r = run_filter(model, ObservationProcess(h), z0, x0, cfg)
        conv.append(r.converged_at is not None)
        finals.append(r.final_error)
    frac = np.mean(conv)
    ok = frac == 1.0 and drift <= 1e-6
    criterion(5, ok, f"converged below 1e-7 by t=400: {frac:.0%} (want 100%), median final "
                     f"error {np.median(finals):.3g}; energy drift {drift:.2e} (want <= 1e-6)")
    assert ok


def test_c6_exkf_vs_filter(criterion):
    model, h, z0 = lorenz96(D), laplacian_observation(D, 8), l96_initial(D)
    ex, tf = [], []
    for ms, x0 in _members(5, 0.01, seed=6):
        r = run_exkf(model, ObservationProcess(h), z0, x0, exkf_p0_scale(D, 0.01), dt=0.001,
                     t_end=100.0, record_every=1000)
        ex.append(r.final_error)
        cfg = FilterConfig(p=10.0, k=8, t_end=100.0, q0_seed=ms, stop_below=1e-13)
        tf.append(run_filter(model, ObservationProcess(h), z0, x0, cfg).final_error)
    ex_mean = float(np.mean(ex))
    ok = 1e-7 <= ex_mean <= 1e-3 and max(tf) < 1e-12
    criterion(6, ok, f"ExKF mean final error {ex_mean:.2e} (members {min(ex):.1e}..{max(ex):.1e}, "
                     f"want [1e-7, 1e-3]); filter worst {max(tf):.1e} (want < 1e-12)")
    assert ok


def test_c7_noisy_observations(criterion):
    sigma = 0.01
    model, h, z0 = lorenz96(D), laplacian_observation(D, 8), l96_initial(D)
    levels, noise = [], []
    for i in range(10):
        ms = member_seed(7, i)
        obs = ObservationProcess(h, sigma, ms)
        cfg = FilterConfig(p=10.0, k=8, t_end=100.0, q0_seed=ms, record_every=10)
        r = run_filter(model, obs, z0, z0, cfg)
        window = (r.times >= 50.0) & (r.times <= 100.0)
        levels.append(r.error_norms[window].mean())
        noise.extend(np.linalg.norm(obs.noise(n)) for n in range(0, 10000, 10))
    level = float(np.mean(levels))
    mean_noise = float(np.mean(noise))
    ok = 3e-3 <= level <= 5e-2 and level < 0.1275
    criterion(7, ok, f"mean error over t in [50, 100] = {level:.3e} (want [3e-3, 5e-2], "
                     f"< 0.1275); mean noise norm {mean_noise:.4f}")
    assert ok


def _property_suite():
    rng = np.random.default_rng(8)
    out = {}
    # QR: recomposition, orthonormality, uniqueness via R_ii > 0
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(2, 20))
        k = int(rng.integers(1, d + 1))
        y = rng.standard_normal((d, k))
        q, r, _ = thin_qr(y)
        ref_q, ref_r = np.linalg.qr(y)
        sgn = np.sign(np.diag(ref_r))
        worst = max(worst, np.abs(q @ r - y).max(), np.abs(q.T @ q - np.eye(k)).max(),
                    np.abs(q - ref_q * sgn).max())
    out["qr"] = worst <= 1e-10
    # constant-matrix LE oracle
    a = np.triu(rng.uniform(-1, 1, (4, 4)), 1) + np.diag([0.9, 0.2, -0.4, -1.3])
    le = compute_les(linear_model(a), np.zeros(4), 4, 500.0, 0.01)
    out["le_oracle"] = np.abs(le.values - [0.9, 0.2, -0.4, -1.3]).max() <= 1e-3
    # Gramian kernel vs observability kernel
    ok = True
    for _ in range(50):
        d = int(rng.integers(2, 7))
        n_obs = int(rng.integers(1, d + 1))
        a = np.zeros((d, d))
        a[:n_obs, :n_obs] = 0.5 * rng.standard_normal((n_obs, n_obs))
        a[n_obs:, :] = 0.5 * rng.standard_normal((d - n_obs, d))
        h = np.zeros((int(rng.integers(1, 4)), d))
        h[:, :n_obs] = rng.standard_normal((h.shape[0], n_obs))
        t = ortho_group.rvs(d, random_state=rng)
        a, h = t @ a @ t.T, h @ t.T
        kern = observability_matrix(a, h).kernel_basis
        vals, vecs = np.linalg.eigh(gramian(a, h, 5.0))
        wk = vecs[:, vals <= 1e-10 * vals.max()]
        ok &= wk.shape[1] == kern.shape[1] and (
            wk.shape[1] == 0 or subspace_angles(wk, kern).max() < 1e-6)
    out["gramian_kernel"] = bool(ok)
    # gain structure
    worst = 0.0
    for _ in range(20):
        q = thin_qr(rng.standard_normal((9, 4))).q
        h = rng.standard_normal((5, 9))
        full = np.hstack([q, null_space(q.T)])
        worst = max(worst, np.abs((full.T @ gain(q, h, 2.0) @ h @ full)[4:]).max())
    out["gain_structure"] = worst <= 1e-10
    # Jacobians against central differences
    worst = 0.0
    for model, z in ((lorenz96(D), l96_initial(D) + rng.standard_normal(D)),
                     (burgers(D), burgers_initial(D, 1))):
        jac = model.jacobian(0.0, z)
        eps = 1e-6
        fd = np.column_stack([(model.rhs(0.0, z + eps * e) - model.rhs(0.0, z - eps * e))
                              / (2 * eps) for e in np.eye(D)])
        worst = max(worst, np.abs(fd - jac).max())
    out["jacobian_fd"] = worst <= 1e-6
    # zero-innovation neutrality
    z0 = l96_initial(D) + 0.5
    r = run_filter(lorenz96(D), ObservationProcess(laplacian_observation(D, 8)), z0, z0,
                   FilterConfig(t_end=10.0))
    out["neutrality"] = bool(np.all(r.error_norms == 0.0))
    # scalar Riccati fixed point
    st = ExkfState(np.zeros(1), np.array([[3.0]]))
    for _ in range(3000):
        st = exkf_step(linear_model(np.array([[0.5]])), [[1.0]], [[1.0]], np.zeros(1), st, 0.01)
    out["riccati"] = abs(st.p_cov[0, 0] - 1.0) <= 1e-4
    # observation noise norm statistic
    sigma, s = 0.01, 8
    obs = ObservationProcess(np.eye(s, D), sigma, 5)
    mean = np.mean([np.linalg.norm(obs.noise(n)) for n in range(20000)])
    out["noise_norm"] = abs(mean / (sigma * np.sqrt(2 * s - 1) / np.sqrt(2)) - 1) <= 0.03
    return out


def test_c8_property_suites(criterion):
    res = _property_suite()
    failed = [k for k, v in res.items() if not v]
    ok = not failed
    criterion(8, ok, f"{len(res) - len(failed)}/{len(res)} property checks pass"
                     + (f"; failing: {', '.join(failed)}" if failed else ""))
    assert ok
