"""Experiment configuration: a flat ``key = value`` text format.

Grammar, one entry per line::

    # comment
    key = value            # trailing comments allowed
    methods = uniform, quantile, motzkin

Keys are the CLI flag names with dashes replaced by underscores. Unknown
keys and repeated keys are errors. Lists are comma separated.
"""
from dataclasses import dataclass, fields, replace

from .corruption import MODELS
from .errors import ConfigError
from .solvers import STRATEGIES, SolverConfig

VERIFY_CHECKS = ("lemma1", "lemma2", "lemma3", "assembled", "theorem_step", "sv_rate")


def _int(v):
    return int(v)


def _float(v):
    return float(v)


def _list(v):
    return tuple(s.strip() for s in v.split(",") if s.strip())


_PARSERS = {
    "m": _int,
    "n": _int,
    "seed": _int,
    "system": str,
    "beta": _float,
    "model": str,
    "magnitude": _float,
    "methods": _list,
    "q": _float,
    "t": _int,
    "p": _float,
    "max_iters": _int,
    "stop_tol": _float,
    "trials": _int,
    "out": str,
    "verify": _list,
    "workers": _int,
}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int | None = None
    m: int | None = None
    n: int | None = None
    system: str | None = None
    beta: float | None = None
    model: str | None = None
    magnitude: float | None = None
    methods: tuple = ()
    q: float | None = None
    t: int | None = None
    p: float | None = None
    max_iters: int | None = None
    stop_tol: float = 0.0
    trials: int = 1
    out: str | None = None
    verify: tuple = ()
    workers: int = 1

    def validate(self, need_out=False, need_methods=True):
        missing = [k for k in ("seed", "max_iters", "beta") if getattr(self, k) is None]
        if self.system is None and (self.m is None or self.n is None):
            missing.append("m/n (or system)")
        if need_methods and not self.methods:
            missing.append("methods")
        if need_out and not self.out:
            missing.append("out")
        if missing:
            raise ConfigError("missing required config keys: " + ", ".join(missing))
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.beta > 0 and self.model is None:
            raise ConfigError("beta > 0 needs a corruption model")
        if self.model is not None and self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {MODELS}")
        for meth in self.methods:
            if meth not in STRATEGIES:
                raise ConfigError(f"unknown method {meth!r}; choose from {sorted(STRATEGIES)}")
        for check in self.verify:
            if check not in VERIFY_CHECKS:
                raise ConfigError(f"unknown verify check {check!r}; choose from {VERIFY_CHECKS}")
        return self

    def solver_config(self, method, seed):
        return SolverConfig(
            strategy=method,
            q=self.q,
            t=self.t,
            p=self.p,
            max_iters=self.max_iters,
            stop_tol=self.stop_tol,
            seed=seed,
        )

    def with_overrides(self, **overrides):
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **overrides)


def parse_config_text(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {value!r} for {key}") from None
    known = {f.name for f in fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in values.items() if k in known})


def load_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read())
