"""Experiment configuration: an INI-style ``key = value`` document with sections.

Sections and keys (all optional except ``[model] model`` and ``[fractional] alpha``)::

    [model]           model, a, b, L, l0, l1, d0, junction_slope_clamped
    [fractional]      alpha, eta
    [discretization]  n_left, n_right, n_xi, xi_max, quad_tol
    [evolution]       T, dt, sample_every, profile, seed
    [sweep]           lambda_min, lambda_max, n_points, fine_factor, tolerance, envelope
    [outputs]         directory, trace, sweep, plot

``n_xi``, ``xi_max``, ``lambda_min`` and ``lambda_max`` accept ``auto``.
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field

from .assembly import Model, ModelSpec
from .errors import ConfigError, FKVError
from .evolution import Profile
from .kernel import DEFAULT_QUAD_TOL, FractionalParams


@dataclass(frozen=True)
class DiscretizationConfig:
    n_left: int = 128
    n_right: int = 128
    n_xi: int | None = None  # None: smallest grid meeting quad_tol
    xi_max: float | None = None
    quad_tol: float = DEFAULT_QUAD_TOL

    def __post_init__(self):
        for name in ("n_left", "n_right"):
            if getattr(self, name) < 2:
                raise ConfigError(f"{name} must be >= 2")
        if self.n_xi is not None and self.n_xi < 2:
            raise ConfigError("n_xi must be >= 2")
        if self.xi_max is not None and not self.xi_max > 1:
            raise ConfigError("xi_max must exceed 1")
        if not 0 < self.quad_tol < 1:
            raise ConfigError("quad_tol must lie in (0, 1)")


@dataclass(frozen=True)
class EvolutionConfig:
    T: float = 50.0
    dt: float = 1e-2
    sample_every: int = 10
    profile: str = "smooth-bump"
    seed: int = 0

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError("T must be > 0")
        if not 0 < self.dt <= self.T:
            raise ConfigError("dt must satisfy 0 < dt <= T")
        if self.sample_every < 1:
            raise ConfigError("sample_every must be >= 1")
        try:
            Profile(self.profile)
        except ValueError:
            raise ConfigError(f"profile must be one of {[p.value for p in Profile]}") from None


@dataclass(frozen=True)
class SweepConfig:
    lambda_min: float | None = None
    lambda_max: float | None = None
    n_points: int = 10
    fine_factor: int = 2
    tolerance: float = 0.2
    envelope: bool = True

    def __post_init__(self):
        if self.n_points < 8:
            raise ConfigError("n_points must be >= 8 for a fit")
        if self.fine_factor < 2:
            raise ConfigError("fine_factor must be >= 2")
        lo, hi = self.lambda_min, self.lambda_max
        if lo is not None and not lo > 0:
            raise ConfigError("lambda_min must be > 0")
        if lo is not None and hi is not None and not lo < hi:
            raise ConfigError("lambda_min < lambda_max required")
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be > 0")


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    trace: bool = True
    sweep: bool = True
    plot: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    fractional: FractionalParams
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)

    @property
    def seed(self) -> int:
        return self.evolution.seed

    def echo(self) -> dict[str, str]:
        """Every key with its effective value, as ``section.key``."""
        out = {}
        for section, obj in self._sections():
            for f in dataclasses.fields(obj):
                out[f"{section}.{f.name}"] = _fmt(getattr(obj, f.name))
        return out

    def to_text(self) -> str:
        lines = []
        for section, obj in self._sections():
            lines.append(f"[{section}]")
            lines += [f"{f.name} = {_fmt(getattr(obj, f.name))}" for f in dataclasses.fields(obj)]
            lines.append("")
        return "\n".join(lines)

    def _sections(self):
        return [
            ("model", self.model), ("fractional", self.fractional), ("discretization", self.discretization),
            ("evolution", self.evolution), ("sweep", self.sweep), ("outputs", self.outputs),
        ]


SECTIONS = {
    "model": ModelSpec,
    "fractional": FractionalParams,
    "discretization": DiscretizationConfig,
    "evolution": EvolutionConfig,
    "sweep": SweepConfig,
    "outputs": OutputConfig,
}
_AUTO = {"n_xi", "xi_max", "lambda_min", "lambda_max"}


def _fmt(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, Model):
        return v.value
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _convert(section: str, key: str, raw: str, kind):
    raw = raw.strip()
    if key in _AUTO and raw.lower() in ("auto", "none", ""):
        return None
    if key == "model":
        return raw.upper()
    if kind is bool or kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if "int" in str(kind):
        return int(raw)
    if "float" in str(kind):
        return float(raw)
    return raw


def _line_numbers(text: str) -> dict[tuple[str, str], int]:
    where, section = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]$", s)
        if m:
            section = m.group(1).strip().lower()
            where[(section, "")] = n
        elif section and s and not s.startswith(("#", ";")):
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
            where[(section, key)] = n
    return where


def parse_config(text: str, overrides: list[str] | tuple[str, ...] = ()) -> ExperimentConfig:
    """Parse, apply ``section.key=value`` overrides and validate."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    lines = _line_numbers(text)

    def loc(section, key=""):
        n = lines.get((section, key))
        return f"line {n}: " if n else "override: " if key else ""

    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{loc(section)}unknown section [{section}]")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        section, _, name = key.rpartition(".")
        if not section:
            owners = [s for s, cls in SECTIONS.items() if name in {f.name.lower() for f in dataclasses.fields(cls)}]
            if len(owners) != 1:
                raise ConfigError(f"override key {name!r} is {'ambiguous' if owners else 'unknown'}; use section.key")
            section = owners[0]
        if section not in SECTIONS:
            raise ConfigError(f"override names unknown section [{section}]")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, name.lower(), value)
        lines.pop((section, name.lower()), None)

    built = {}
    for section, cls in SECTIONS.items():
        fields = {f.name.lower(): f for f in dataclasses.fields(cls)}
        kwargs = {}
        if cp.has_section(section):
            for key, raw in cp.items(section):
                if key not in fields:
                    raise ConfigError(f"{loc(section, key)}unknown key {key!r} in [{section}]")
                f = fields[key]
                try:
                    kwargs[f.name] = _convert(section, key, raw, f.type)
                except ValueError as exc:
                    raise ConfigError(f"{loc(section, key)}[{section}] {key}: {exc}") from None
        try:
            built[section] = cls(**kwargs)
        except TypeError as exc:
            missing = [k for k, f in fields.items() if f.default is dataclasses.MISSING
                       and f.default_factory is dataclasses.MISSING and f.name not in kwargs]
            raise ConfigError(f"[{section}] missing required key(s) {missing}") from exc
        except (FKVError, ValueError) as exc:
            bad = _blame(str(exc), kwargs)
            raise ConfigError(f"{loc(section, bad) if bad else loc(section)}[{section}] {exc}") from None
    return ExperimentConfig(**built)


def _blame(message: str, kwargs: dict) -> str:
    """Best guess at the key an invariant message refers to."""
    for key in sorted(kwargs, key=len, reverse=True):
        if re.search(rf"\b{re.escape(key)}\b", message):
            return key.lower()
    return ""


def load_config(path: str, overrides=()) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, overrides)
