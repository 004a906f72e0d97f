"""Experiment configuration: flat ``key = value`` files, flag overrides and
model/method presets."""

from dataclasses import dataclass, field, fields, replace

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config_text",
           "member_seed", "MODELS", "METHODS"]

MODELS = ("l96", "burgers", "linear-from-file")
METHODS = ("filter", "exkf", "les", "detect", "reconstruct")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "l96"
    method: str = "filter"
    d: int | None = None
    forcing: float = 8.0
    k: int | None = None
    p: float | None = None
    dt: float | None = None
    t_end: float | None = None
    obs_rank: int | None = None
    sigma: float = 0.0
    ensemble_size: int = 1
    perturbation_scale: float | None = None
    seed: int = 0
    burn_in: float = 100.0
    tol: float = 1e-7
    stop_below: float | None = None
    record_every: int | None = None
    workers: int = 1
    allow_divergence: bool = False
    a_file: str | None = None
    h_file: str | None = None
    z0_file: str | None = None
    overridden: tuple = field(default=(), compare=False)


_OPTIONAL_FLOATS = {"p", "dt", "t_end", "perturbation_scale", "stop_below"}
_OPTIONAL_INTS = {"d", "k", "obs_rank", "record_every"}
_FLOATS = {"forcing", "sigma", "burn_in", "tol"}
_INTS = {"ensemble_size", "seed", "workers"}
_STRS = {"model", "method", "a_file", "h_file", "z0_file"}
_BOOLS = {"allow_divergence"}
KEYS = tuple(f.name for f in fields(ExperimentConfig) if f.name != "overridden")


def _convert(key, raw):
    raw = raw.strip() if isinstance(raw, str) else raw
    if key in _BOOLS:
        if isinstance(raw, bool):
            return raw
        low = str(raw).lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if key in _STRS:
        return str(raw)
    if raw is None or (isinstance(raw, str) and raw.lower() in ("", "none")):
        if key in _OPTIONAL_FLOATS | _OPTIONAL_INTS:
            return None
        raise ValueError("a value is required")
    if key in _INTS | _OPTIONAL_INTS:
        val = float(raw)
        if val != int(val):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(val)
    return float(raw)


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines (``#`` starts a comment) into a dict."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _convert(key, value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return out


def _preset(model, method):
    if model == "burgers":
        base = dict(d=18, k=11, p=20.0, dt=0.01, perturbation_scale=0.01)
        t_end = {"filter": 400.0, "exkf": 100.0, "les": 3000.0, "detect": 1000.0}
    elif model == "l96":
        base = dict(d=18, k=8, p=10.0, dt=0.01, perturbation_scale=0.1)
        t_end = {"filter": 200.0, "exkf": 100.0, "les": 3000.0, "detect": 1000.0}
    else:
        base = dict(k=1, p=10.0, dt=0.01, perturbation_scale=0.1)
        t_end = {"filter": 20.0, "exkf": 20.0, "les": 200.0, "detect": 5.0,
                 "reconstruct": 5.0}
    if method == "exkf":
        base.update(dt=0.001, perturbation_scale=0.01)
    base["t_end"] = t_end.get(method, 100.0)
    base["record_every"] = 10 if method in ("filter", "exkf") else 100
    return base


def _validate(cfg):
    errs = []
    if cfg.model not in MODELS:
        errs.append(f"model must be one of {MODELS}")
    if cfg.method not in METHODS:
        errs.append(f"method must be one of {METHODS}")
    if cfg.model == "linear-from-file" and not cfg.a_file:
        errs.append("model linear-from-file needs a_file")
    if cfg.d is not None and cfg.d < (4 if cfg.model == "l96" else 3 if cfg.model == "burgers"
                                      else 1):
        errs.append(f"d = {cfg.d} is too small for model {cfg.model}")
    if cfg.k is not None and cfg.d is not None and not 1 <= cfg.k <= cfg.d:
        errs.append(f"k must satisfy 1 <= k <= d (k = {cfg.k}, d = {cfg.d})")
    if cfg.obs_rank is not None and cfg.d is not None and not 1 <= cfg.obs_rank <= cfg.d:
        errs.append(f"obs_rank must satisfy 1 <= obs_rank <= d "
                    f"(obs_rank = {cfg.obs_rank}, d = {cfg.d})")
    for name in ("dt", "t_end"):
        v = getattr(cfg, name)
        if v is not None and not v > 0:
            errs.append(f"{name} must be positive")
    if cfg.p is not None and cfg.p < 0:
        errs.append("p must be nonnegative")
    if cfg.sigma < 0:
        errs.append("sigma must be nonnegative")
    if cfg.perturbation_scale is not None and cfg.perturbation_scale < 0:
        errs.append("perturbation_scale must be nonnegative")
    if cfg.ensemble_size < 1:
        errs.append("ensemble_size must be at least 1")
    if cfg.record_every is not None and cfg.record_every < 1:
        errs.append("record_every must be at least 1")
    if cfg.workers < 1:
        errs.append("workers must be at least 1")
    if cfg.burn_in < 0:
        errs.append("burn_in must be nonnegative")
    if errs:
        raise ConfigError("invalid configuration: " + "; ".join(errs))


def load_config(path=None, overrides=None):
    """Resolve a configuration from an optional file plus flag overrides.

    Flags win over file values; anything still unset takes the preset for the
    chosen model and method. The names of overridden file keys are kept in
    ``overridden`` so they can be echoed in the run header.
    """
    values = {}
    if path is not None:
        with open(path) as fh:
            values = parse_config_text(fh.read(), str(path))
    overridden = []
    for key, raw in (overrides or {}).items():
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ConfigError(f"unknown option {key!r}")
        if raw is None:
            continue
        try:
            val = _convert(key, raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
        if key in values and values[key] != val:
            overridden.append(key)
        values[key] = val
    cfg = ExperimentConfig(**values)
    _validate(cfg)
    preset = _preset(cfg.model, cfg.method)
    if cfg.model == "linear-from-file":
        preset.pop("d", None)
    fill = {k: v for k, v in preset.items() if getattr(cfg, k) is None}
    cfg = replace(cfg, **fill, overridden=tuple(overridden))
    if cfg.obs_rank is None and cfg.model != "linear-from-file":
        cfg = replace(cfg, obs_rank=cfg.k)
    _validate(cfg)
    return cfg


_MASK64 = (1 << 64) - 1


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def member_seed(seed, member):
    """Seed for ensemble member ``member``; depends only on ``(seed, member)``."""
    return (int(seed) & _MASK64) ^ _splitmix64(int(member))
