"""Run configuration: a flat ``key = value`` text format.

Lines are ``key = value``; ``#`` starts a comment.  Unknown keys and
out-of-range values raise :class:`ConfigError` naming the key.

Example::

    problem = boxes2d
    n = 33
    sigma = 80      # acceptance threshold
    rounds = 4, 4, 3
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

from .coarsening import DEFAULT_SIGMA, CoarseningParams
from .multigrid import HierarchyConfig
from .problems import PROBLEMS
from .smoothers import SMOOTHERS
from .smoothing import SmoothingParams

_BOOL = {"1": True, "on": True, "true": True, "yes": True,
         "0": False, "off": False, "false": False, "no": False}


class ConfigError(ValueError):
    """Malformed configuration; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    """All parameters of one run.

    ``sigma = None`` selects the per-kind default (20 scalar, 80 elasticity);
    ``dirichlet = None`` selects the problem default.  ``R = 1`` picks
    candidates by minimal ``mu_s``, ``R = 0`` by minimal ``mu_p``.
    """

    problem: str = "poisson3d"
    n: int = 8
    # coefficients
    mu: float = 1.0
    lam: float = 1.0
    alpha: float = 1.0
    beta: float = 0.0
    soft: float = 1.0
    hard: float = 1e4
    n_boxes: int = 11
    beam_length: int = 4
    dirichlet: tuple | None = None
    # coarsening
    sigma: float | None = None
    delta: int = 1
    R: int = 1
    rounds: tuple = (4, 4, 3)
    robust: bool = True
    # prolongation
    prolongation: str = "smoothed"
    omega: float = 2.0 / 3.0
    cap: int = 4
    standard_cap: int | None = None
    # cycle
    smoother: str = "gauss-seidel"
    pre_steps: int = 1
    post_steps: int = 1
    coarse_size: int = 100
    coarse_reduction: float = 10.0
    max_levels: int = 25
    # solve
    rtol: float = 1e-6
    maxit: int = 500
    seed: int = 0
    timings: bool = False

    def __post_init__(self):
        _check(self.problem in PROBLEMS, "problem", f"must be one of {', '.join(PROBLEMS)}")
        _check(self.n >= 1, "n", "must be >= 1")
        _check(self.n_boxes >= 1, "n_boxes", "must be >= 1")
        _check(self.beam_length >= 1, "beam_length", "must be >= 1")
        for key in ("mu", "lam", "alpha", "soft", "hard"):
            _check(getattr(self, key) > 0, key, "must be positive")
        _check(self.beta >= 0, "beta", "must be nonnegative")
        _check(self.sigma is None or self.sigma > 1, "sigma", "must exceed 1")
        _check(self.delta in (0, 1), "delta", "must be 0 or 1")
        _check(self.R in (0, 1), "R", "must be 0 or 1")
        _check(len(self.rounds) > 0 and min(self.rounds) >= 1, "rounds", "entries must be >= 1")
        _check(self.prolongation in ("smoothed", "tentative"), "prolongation", "must be smoothed or tentative")
        _check(0.0 <= self.omega <= 1.0, "omega", "must lie in [0, 1]")
        _check(self.cap >= 0, "cap", "must be >= 0")
        _check(self.standard_cap is None or self.standard_cap >= 0, "standard_cap", "must be >= 0")
        _check(self.smoother in SMOOTHERS, "smoother", f"must be one of {', '.join(SMOOTHERS)}")
        _check(self.pre_steps >= 0, "pre_steps", "must be >= 0")
        _check(self.post_steps >= 0, "post_steps", "must be >= 0")
        _check(self.coarse_size >= 1, "coarse_size", "must be >= 1")
        _check(self.coarse_reduction >= 1, "coarse_reduction", "must be >= 1")
        _check(self.max_levels >= 1, "max_levels", "must be >= 1")
        _check(0 < self.rtol < 1, "rtol", "must lie in (0, 1)")
        _check(self.maxit >= 1, "maxit", "must be >= 1")
        _check(self.seed >= 0, "seed", "must be >= 0")

    @property
    def kind(self):
        return "scalar" if self.problem.startswith("poisson") else "elasticity"

    @property
    def effective_sigma(self):
        return DEFAULT_SIGMA[self.kind] if self.sigma is None else float(self.sigma)

    def hierarchy_config(self):
        """The :class:`HierarchyConfig` described by this run."""
        coarsening = CoarseningParams(sigma=self.effective_sigma, delta=self.delta,
                                      pick_by_scalar=self.R == 1, rounds=self.rounds[0], robust=self.robust)
        smoothing = SmoothingParams(omega=self.omega, cap=self.cap, standard_cap=self.standard_cap)
        return HierarchyConfig(coarsening=coarsening, rounds=tuple(self.rounds), prolongation=self.prolongation,
                               smoothing=smoothing, smoother=self.smoother, pre_steps=self.pre_steps,
                               post_steps=self.post_steps, coarse_size=self.coarse_size,
                               coarse_reduction=self.coarse_reduction, max_levels=self.max_levels)

    def problem_kwargs(self):
        return dict(dirichlet=self.dirichlet, mu=self.mu, lam=self.lam, alpha=self.alpha, beta=self.beta,
                    n_boxes=self.n_boxes, soft=self.soft, hard=self.hard, beam_length=self.beam_length)

    def items(self):
        """``(key, formatted value)`` pairs in declaration order."""
        return [(f.name, format_value(getattr(self, f.name))) for f in dataclasses.fields(self)]

    def to_text(self):
        return "".join(f"{k} = {v}\n" for k, v in self.items())


def _check(ok, key, message):
    if not ok:
        raise ConfigError(f"{key}: {message}", key)


def format_value(v):
    if v is None:
        return "default"
    if isinstance(v, bool):
        return "on" if v else "off"
    if isinstance(v, tuple):
        return ", ".join(format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_INT_KEYS = {"n", "n_boxes", "beam_length", "delta", "R", "cap", "standard_cap", "pre_steps",
             "post_steps", "coarse_size", "max_levels", "maxit", "seed"}
_FLOAT_KEYS = {"mu", "lam", "alpha", "beta", "soft", "hard", "sigma", "omega", "coarse_reduction", "rtol"}


def _convert(key, raw):
    try:
        if key in ("sigma", "standard_cap", "dirichlet") and raw.lower() == "default":
            return None
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in ("robust", "timings"):
            return _BOOL[raw.lower()]
        if key == "rounds":
            return tuple(int(x) for x in raw.replace(",", " ").split())
        if key == "dirichlet":
            if raw.lower() == "none":
                return ()
            return tuple(x for x in raw.replace(",", " ").split())
        return raw
    except (ValueError, KeyError):
        raise ConfigError(f"{key}: cannot parse {raw!r}", key) from None


def parse_config(text, source="<string>"):
    """Parse configuration text into a :class:`RunConfig`."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}", key)
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}", key)
        values[key] = _convert(key, raw)
    return RunConfig(**values)


def load_config(path):
    """Read and parse a configuration file."""
    with open(os.fspath(path), encoding="utf-8") as fh:
        return parse_config(fh.read(), os.fspath(path))
