"""Command-line front end for the twin experiments and analyses."""

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace

import numpy as np

from . import __version__
from .config import METHODS, ConfigError, load_config, member_seed
from .detect import (gramian, least_squares_initial_state, lti_detectable, ltv_detectability,
                     observability_matrix)
from .filters import (FilterConfig, FilterFailure, exkf_p0_scale, run_exkf, run_filter)
from .io import format_float, write_csv
from .lyapunov import TangentCollapse, compute_les
from .models import (ObservationProcess, burgers, burgers_initial, l96_initial, linear_model,
                     lorenz96)
from .ode import DivergenceError
from .qr import laplacian_observation

EXIT_OK = 0
EXIT_DIVERGED = 3
EXIT_USAGE = 2

_FAILURES = (DivergenceError, TangentCollapse, FilterFailure)


def build_problem(cfg):
    """Return ``(model, z0, H)`` for a resolved configuration."""
    if cfg.model == "l96":
        return lorenz96(cfg.d, cfg.forcing), l96_initial(cfg.d), \
            laplacian_observation(cfg.d, cfg.obs_rank)
    if cfg.model == "burgers":
        return burgers(cfg.d), burgers_initial(cfg.d, cfg.seed), \
            laplacian_observation(cfg.d, cfg.obs_rank)
    a = np.loadtxt(cfg.a_file, ndmin=2)
    d = a.shape[0]
    if cfg.h_file:
        h = np.loadtxt(cfg.h_file, ndmin=2)
    else:
        h = laplacian_observation(d, cfg.obs_rank or d)
    z0 = np.loadtxt(cfg.z0_file, ndmin=1) if cfg.z0_file else np.ones(d)
    return linear_model(a), z0, h


def _header(cfg, extra=()):
    lines = [f"lyapda_version = {__version__}"]
    for key, val in asdict(cfg).items():
        if key == "overridden":
            continue
        if isinstance(val, float):
            val = format_float(val)
        lines.append(f"{key} = {val}")
    if cfg.overridden:
        lines.append("overridden_by_flags = " + ",".join(cfg.overridden))
    lines.extend(extra)
    return "\n".join(lines) + "\n"


def _member(args):
    method, cfg, i = args
    model, z0, h = build_problem(cfg)
    ms = member_seed(cfg.seed, i)
    rng = np.random.default_rng(ms)
    x0 = z0 + cfg.perturbation_scale * rng.standard_normal(model.d)
    obs = ObservationProcess(h, cfg.sigma, ms)
    try:
        if method == "filter":
            fcfg = FilterConfig(p=cfg.p, k=cfg.k, dt=cfg.dt, t_end=cfg.t_end, q0_seed=ms,
                                tol=cfg.tol, stop_below=cfg.stop_below,
                                record_every=cfg.record_every)
            res = run_filter(model, obs, z0, x0, fcfg)
        else:
            p0 = exkf_p0_scale(model.d, cfg.perturbation_scale) if cfg.perturbation_scale \
                else 1.0
            res = run_exkf(model, obs, z0, x0, p0, dt=cfg.dt, t_end=cfg.t_end, tol=cfg.tol,
                           record_every=cfg.record_every)
    except _FAILURES as exc:
        return i, None, str(exc)
    return i, (res.times, res.error_norms, res.converged_at), None


def _run_ensemble(cfg, method, out_dir):
    jobs = [(method, cfg, i) for i in range(cfg.ensemble_size)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_member, jobs))
    else:
        results = [_member(j) for j in jobs]
    summary = []
    failed = []
    for i, res, err in results:
        if res is None:
            failed.append(f"member {i}: {err}")
            summary.append((i, None, None, err))
            continue
        times, errs, conv = res
        write_csv(os.path.join(out_dir, f"member_{i}.csv"), ["t", "err_norm"], zip(times, errs))
        summary.append((i, conv, errs[-1], ""))
    write_csv(os.path.join(out_dir, "summary.csv"),
              ["member", "converged_at", "final_error", "failure"], summary)
    for line in failed:
        print(f"diverged: {line}", file=sys.stderr)
    n_conv = sum(1 for row in summary if row[1] is not None)
    print(f"{method}: {n_conv}/{cfg.ensemble_size} members converged below {cfg.tol:g}")
    if failed and not cfg.allow_divergence:
        return EXIT_DIVERGED
    return EXIT_OK


def _run_les(cfg, out_dir):
    model, z0, _ = build_problem(cfg)
    x0 = np.zeros(model.d) if model.linear else z0
    try:
        le = compute_les(model, x0, cfg.k, cfg.t_end, cfg.dt, q0_seed=cfg.seed,
                         burn_in=cfg.burn_in, record_every=cfg.record_every, order_slack=None)
    except _FAILURES as exc:
        print(f"les failed: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    le.to_csv(os.path.join(out_dir, "lambda.csv"))
    if np.any(np.diff(le.values) > 1e-3):
        print("warning: estimates are not ordered; the averaging window is probably too short",
              file=sys.stderr)
    print("lyapunov exponents: " + " ".join(f"{v:.6g}" for v in le.values))
    return EXIT_OK


def _run_detect(cfg, out_dir):
    model, z0, h = build_problem(cfg)
    if model.linear:
        a = model.jacobian(0.0, z0)
        om = observability_matrix(a, h)
        verdict = lti_detectable(a, h)
        w = gramian(a, h, cfg.t_end, cfg.dt)
        lines = [f"s = {om.s}", f"rank = {om.rank}", f"kernel_dim = {om.kernel_basis.shape[1]}",
                 f"verdict = {str(verdict.detectable).lower()}"]
        if not verdict.detectable:
            lines.append(f"witness_eigenvalue = {verdict.eigenvalue}")
        text = "\n".join(lines) + "\n"
        write_csv(os.path.join(out_dir, "gramian.csv"),
                  [f"c{j + 1}" for j in range(w.shape[1])], w)
    else:
        try:
            rep = ltv_detectability(model, z0, h, cfg.k, cfg.t_end, cfg.dt, q0_seed=cfg.seed,
                                    burn_in=cfg.burn_in)
        except _FAILURES as exc:
            print(f"detect failed: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        text = rep.to_text()
        rep.to_csv(os.path.join(out_dir, "detect.csv"))
    with open(os.path.join(out_dir, "detect.txt"), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def _run_reconstruct(cfg, out_dir):
    if cfg.model != "linear-from-file":
        raise ConfigError("reconstruct needs model = linear-from-file")
    model, z0, h = build_problem(cfg)
    a = model.jacobian(0.0, z0)
    n = int(round(cfg.t_end / cfg.dt))
    obs = ObservationProcess(h, cfg.sigma, cfg.seed)
    # truth on the same RK4 grid the reconstruction uses
    from .ode import IntegratorConfig, integrate

    traj = integrate(model.rhs, IntegratorConfig(cfg.dt, 0.0, n * cfg.dt), z0, stride=1)
    y = np.array([obs.h @ z + obs.noise(i) for i, z in enumerate(traj.states)])
    v, resid = least_squares_initial_state(a, h, y, cfg.dt)
    write_csv(os.path.join(out_dir, "reconstruct.csv"), ["index", "v_dagger", "z0"],
              [(i + 1, vi, zi) for i, (vi, zi) in enumerate(zip(v, z0))])
    with open(os.path.join(out_dir, "reconstruct.txt"), "w") as fh:
        fh.write(f"residual = {format_float(resid)}\n"
                 f"error_norm = {format_float(np.linalg.norm(v - z0))}\n")
    print(f"residual {resid:.6g}, |v - z0| = {np.linalg.norm(v - z0):.6g}")
    return EXIT_OK


def run(cfg, out_dir):
    """Run the configured method, writing artifacts into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "run_header.txt"), "w") as fh:
        fh.write(_header(cfg))
    if cfg.method in ("filter", "exkf"):
        return _run_ensemble(cfg, cfg.method, out_dir)
    if cfg.method == "les":
        return _run_les(cfg, out_dir)
    if cfg.method == "detect":
        return _run_detect(cfg, out_dir)
    return _run_reconstruct(cfg, out_dir)


_FLAGS = [
    ("--model", str), ("--d", int), ("--k", int), ("--p", float), ("--dt", float),
    ("--t-end", float), ("--obs-rank", int), ("--sigma", float), ("--ensemble", int),
    ("--perturb", float), ("--seed", int), ("--burn-in", float), ("--workers", int),
    ("--record-every", int), ("--stop-below", float), ("--forcing", float),
]
_FLAG_KEYS = {"ensemble": "ensemble_size", "perturb": "perturbation_scale"}


def build_parser():
    parser = argparse.ArgumentParser(prog="lyapda", description=__doc__)
    parser.add_argument("--version", action="version", version=f"lyapda {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("les", "filter", "exkf", "detect", "reconstruct", "ensemble"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value configuration file")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--allow-divergence", action="store_true", default=None)
        for flag, typ in _FLAGS:
            sp.add_argument(flag, type=typ, default=None)
        if name == "ensemble":
            sp.add_argument("--method", choices=("filter", "exkf"), default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {}
    for flag, _ in _FLAGS:
        name = flag[2:].replace("-", "_")
        overrides[_FLAG_KEYS.get(name, name)] = getattr(args, name)
    overrides["allow_divergence"] = args.allow_divergence
    if args.command != "ensemble":
        overrides["method"] = args.command
    else:
        overrides["method"] = args.method
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "ensemble" and cfg.method not in ("filter", "exkf"):
            raise ConfigError("ensemble runs need method filter or exkf")
        return run(cfg, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
