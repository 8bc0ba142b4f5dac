"""Experiment configuration stored as INI files."""
from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .linear_mdp import default_mdp, peaked_core, random_stochastic_core
from .meta_learner import ESTIMATOR_KINDS
from .task_family import TaskFamily, dirichlet_family, finite_family, orthogonal_family, point_mass_family

FAMILY_KINDS = ("dirichlet", "finite", "point_mass", "orthogonal")


@dataclass
class FamilySpec:
    kind: str = "dirichlet"
    num_states: int = 4
    num_actions: int = 2
    d: int = 3
    horizon: int = 5
    kappa: float = 200.0
    mean_core: str = "peaked"  # peaked | random
    peak: float = 0.85
    finite_size: int = 3
    instance_seed: int = 0


@dataclass
class AlgorithmSpec:
    estimators: list = field(default_factory=lambda: ["zero", "oracle"])
    lambda_mode: str = "schedule"
    lam: float = 1.0
    lambda_train: float = 1.0
    delta: str = "auto"
    radius: str = "oracle"
    continual: bool = False


@dataclass
class RunSpec:
    g_train: int = 0
    g_test: int = 5
    episodes: int = 100
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    master_seed: int = 0
    lemma_checks: bool = True


@dataclass
class ExperimentConfig:
    family: FamilySpec = field(default_factory=FamilySpec)
    algorithm: AlgorithmSpec = field(default_factory=AlgorithmSpec)
    run: RunSpec = field(default_factory=RunSpec)
    output_dir: str = "runs/default"

    # -- I/O --------------------------------------------------------------------

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError("file", str(exc)) from exc
        cfg = cls()
        known = {"family": cfg.family, "algorithm": cfg.algorithm, "run": cfg.run}
        for section in cp.sections():
            if section == "output":
                for key, value in cp.items(section):
                    if key != "dir":
                        raise ConfigError(f"output.{key}", "unknown key")
                    cfg.output_dir = value
                continue
            if section not in known:
                raise ConfigError(section, "unknown section")
            target = known[section]
            types = {f.name: f.type for f in fields(target)}
            for key, value in cp.items(section):
                name = "lam" if (section, key) == ("algorithm", "lambda") else key
                if name not in types:
                    raise ConfigError(f"{section}.{key}", "unknown key")
                setattr(target, name, _coerce(f"{section}.{key}", types[name], value))
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("file", f"cannot read {path}: {exc}") from exc
        return cls.from_text(text)

    def to_text(self) -> str:
        cp = configparser.ConfigParser()
        for section, obj in (("family", self.family), ("algorithm", self.algorithm), ("run", self.run)):
            cp[section] = {}
            for f in fields(obj):
                key = "lambda" if f.name == "lam" else f.name
                cp[section][key] = _render(getattr(obj, f.name))
        cp["output"] = {"dir": self.output_dir}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    # -- checks and construction ------------------------------------------------

    def validate(self):
        f, a, r = self.family, self.algorithm, self.run
        if f.kind not in FAMILY_KINDS:
            raise ConfigError("family.kind", f"must be one of {FAMILY_KINDS}")
        for name in ("num_states", "num_actions", "d", "horizon", "finite_size"):
            if getattr(f, name) < 1:
                raise ConfigError(f"family.{name}", "must be positive")
        if f.kappa <= 0:
            raise ConfigError("family.kappa", "must be positive")
        if f.mean_core not in ("peaked", "random"):
            raise ConfigError("family.mean_core", "must be 'peaked' or 'random'")
        if not 0.0 < f.peak < 1.0:
            raise ConfigError("family.peak", "must lie in (0, 1)")
        if not a.estimators:
            raise ConfigError("algorithm.estimators", "need at least one estimator")
        for e in a.estimators:
            if e not in ESTIMATOR_KINDS:
                raise ConfigError("algorithm.estimators", f"unknown estimator {e!r}")
        if len(set(a.estimators)) != len(a.estimators):
            raise ConfigError("algorithm.estimators", "duplicates")
        if a.lambda_mode not in ("fixed", "schedule"):
            raise ConfigError("algorithm.lambda_mode", "must be 'fixed' or 'schedule'")
        if a.lam <= 0 or a.lambda_train <= 0:
            raise ConfigError("algorithm.lambda", "must be positive")
        if a.delta != "auto":
            try:
                dv = float(a.delta)
            except ValueError:
                raise ConfigError("algorithm.delta", "must be 'auto' or a number") from None
            if not 0.0 < dv < 1.0:
                raise ConfigError("algorithm.delta", "must lie in (0, 1)")
        if a.radius not in ("oracle", "assumption"):
            raise ConfigError("algorithm.radius", "must be 'oracle' or 'assumption'")
        if r.g_train < 0:
            raise ConfigError("run.g_train", "must be >= 0")
        if r.g_test < 1:
            raise ConfigError("run.g_test", "must be >= 1")
        if r.episodes < 1:
            raise ConfigError("run.episodes", "must be >= 1")
        if not r.seeds:
            raise ConfigError("run.seeds", "need at least one seed")
        if len(set(r.seeds)) != len(r.seeds):
            raise ConfigError("run.seeds", "seeds must be distinct")
        if any(s < 0 for s in r.seeds):
            raise ConfigError("run.seeds", "seeds must be nonnegative")
        if f.kind == "orthogonal" and (r.g_train != f.d - 1 or r.g_test != 1):
            raise ConfigError("run.g_train", "orthogonal family trains on d-1 cores and tests on the last")

    @property
    def delta_value(self) -> float | None:
        return None if self.algorithm.delta == "auto" else float(self.algorithm.delta)

    def build_family(self) -> TaskFamily:
        f = self.family
        if f.kind == "orthogonal":
            return orthogonal_family(f.d, horizon=f.horizon, num_actions=f.num_actions)
        base = default_mdp(f.num_states, f.num_actions, f.d, f.horizon, seed=f.instance_seed)
        if f.mean_core == "peaked":
            mean = peaked_core(f.d, f.num_states, f.peak)
        else:
            mean = base.core
        if f.kind == "dirichlet":
            return dirichlet_family(base, mean, f.kappa)
        if f.kind == "point_mass":
            return point_mass_family(base, mean)
        rng = np.random.default_rng([f.instance_seed, 1])
        cores = [random_stochastic_core(f.d, f.num_states, rng) for _ in range(f.finite_size)]
        return finite_family(base, cores)

    def explicit_cores(self, family):
        if self.family.kind == "orthogonal":
            return list(family.cores[:-1]), [family.cores[-1]]
        return None, None


def _coerce(name, typ, value):
    typ = typ if isinstance(typ, str) else getattr(typ, "__name__", str(typ))
    try:
        if typ == "int":
            return int(value)
        if typ == "float":
            return float(value)
        if typ == "bool":
            v = value.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if typ == "list":
            items = [x.strip() for x in value.split(",") if x.strip()]
            if name == "run.seeds":
                return [int(x) for x in items]
            return items
        return value.strip()
    except ValueError:
        raise ConfigError(name, f"cannot parse {value!r} as {typ}") from None


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def preset_names() -> list[str]:
    files = resources.files("bucmatrixrl") / "presets"
    return sorted(p.name[:-4] for p in files.iterdir() if p.name.endswith(".ini"))


def preset_path(name: str):
    return resources.files("bucmatrixrl") / "presets" / f"{name}.ini"


def load_preset(name: str) -> ExperimentConfig:
    path = preset_path(name)
    if not path.is_file():
        raise ConfigError("preset", f"unknown preset {name!r}")
    return ExperimentConfig.from_text(path.read_text())
