"""Experiment configuration with INI-file loading.

A config file has up to four sections whose keys are the field names below::

    [system]
    n_subcarriers = 64
    n_symbols = 2000

    [learning]
    compressed_dim = 61

    [allocation]
    scheme = online

    [run]
    preset = desk
    trials = 20

``preset`` selects the base values (``paper`` or ``desk``) that the other
keys then override.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import InvalidConfigError
from .learning.model import MODEL_DIM

SCHEMES = ("online", "offline", "rsca")
CONSTANT_SOURCES = ("paper", "estimated")


@dataclass(frozen=True)
class SystemConfig:
    n_fl_devices: int = 20
    n_it_devices: int = 5
    n_subcarriers: int = 512
    n_symbols: int = 2000
    p1: float = 1.0
    p2: float = 1.0
    noise_var: float = 0.1
    phi_db: float = 6.0
    symbol_duration: float = 16e-6
    coherence_block_len: int = 1
    channel_profile: str = "tdl"
    n_taps: int = 6


@dataclass(frozen=True)
class LearningConfig:
    alpha: float = 1.0
    beta: float = 1.0
    total_samples: int = 10000
    power_law_exponent: float = 1.5
    batch: int = 32
    clip: float = 1.0
    gamma: float = 1000.0
    schedule: str = "paper"
    base_lr: float = 0.05
    reg: float = 0.5
    epsilon: float = 0.36
    compressed_dim: int = 0
    constants: str = "estimated"
    channel_term_samples: int = 100_000
    eval_every: int = 1


@dataclass(frozen=True)
class AllocationConfig:
    scheme: str = "online"
    tau: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one run.

    ``learning.compressed_dim = 0`` keeps the full model dimension;
    ``allocation.tau = 0`` uses the optimised number of local steps;
    ``learning.constants`` picks reported or freshly estimated learning
    constants for the convergence bound.
    """

    system: SystemConfig = field(default_factory=SystemConfig)
    learning: LearningConfig = field(default_factory=LearningConfig)
    allocation: AllocationConfig = field(default_factory=AllocationConfig)
    trials: int = 1
    seed: int = 0
    preset: str = "paper"

    def __post_init__(self):
        s, l, a = self.system, self.learning, self.allocation
        positive_int = {
            "system.n_fl_devices": s.n_fl_devices, "system.n_it_devices": s.n_it_devices,
            "system.n_subcarriers": s.n_subcarriers, "system.n_symbols": s.n_symbols,
            "system.coherence_block_len": s.coherence_block_len, "system.n_taps": s.n_taps,
            "learning.total_samples": l.total_samples, "learning.batch": l.batch,
            "learning.channel_term_samples": l.channel_term_samples,
            "learning.eval_every": l.eval_every, "trials": self.trials,
        }
        for name, v in positive_int.items():
            if int(v) != v or v < 1:
                raise InvalidConfigError(f"{name} must be a positive integer, got {v!r}")
        positive = {
            "system.p1": s.p1, "system.p2": s.p2, "system.noise_var": s.noise_var,
            "system.symbol_duration": s.symbol_duration, "learning.clip": l.clip,
            "learning.gamma": l.gamma, "learning.base_lr": l.base_lr, "learning.reg": l.reg,
            "learning.epsilon": l.epsilon,
        }
        for name, v in positive.items():
            if not v > 0:
                raise InvalidConfigError(f"{name} must be positive, got {v!r}")
        if s.phi_db < 0:
            raise InvalidConfigError("system.phi_db must be >= 0")
        if l.alpha < 0 or l.beta < 0:
            raise InvalidConfigError("learning.alpha and learning.beta must be >= 0")
        if l.compressed_dim < 0 or a.tau < 0 or self.seed < 0:
            raise InvalidConfigError("compressed_dim, tau and seed must be >= 0")
        if s.channel_profile not in ("iid", "tdl"):
            raise InvalidConfigError(f"unknown channel profile {s.channel_profile!r}")
        if l.schedule not in ("paper", "theorem"):
            raise InvalidConfigError(f"unknown schedule {l.schedule!r}")
        if l.constants not in CONSTANT_SOURCES:
            raise InvalidConfigError(f"learning.constants must be one of {CONSTANT_SOURCES}")
        if a.scheme not in SCHEMES:
            raise InvalidConfigError(f"allocation.scheme must be one of {SCHEMES}")
        if l.total_samples < s.n_fl_devices:
            raise InvalidConfigError("need at least one sample per FL device")

    # ------------------------------------------------------------ presets

    @classmethod
    def paper(cls) -> "ExperimentConfig":
        """Full-scale setting with the reported learning constants."""
        return cls(learning=LearningConfig(constants="paper"), preset="paper")

    @classmethod
    def desk(cls) -> "ExperimentConfig":
        """Scaled-down setting that runs in seconds per trial.

        Ten FL devices, 64 subcarriers and a 61-coordinate sparsified model
        change per round.
        """
        return cls(
            system=SystemConfig(n_fl_devices=10, n_subcarriers=64, n_symbols=1500),
            learning=LearningConfig(total_samples=5000, compressed_dim=61,
                                    channel_term_samples=200_000),
            preset="desk",
        )

    @classmethod
    def preset_named(cls, name: str) -> "ExperimentConfig":
        try:
            return {"paper": cls.paper, "desk": cls.desk}[name]()
        except KeyError:
            raise InvalidConfigError(f"unknown preset {name!r}; choose paper or desk") from None

    # ------------------------------------------------------------ updates

    def with_values(self, **dotted) -> "ExperimentConfig":
        """Return a copy with ``section.key`` (or top-level) values replaced.

        String values are converted to the field's type.
        """
        cfg = self
        for key, value in dotted.items():
            cfg = cfg._with_one(key.replace("__", "."), value)
        return cfg

    def _with_one(self, key: str, value) -> "ExperimentConfig":
        if "." in key:
            section, name = key.split(".", 1)
            sub = getattr(self, section, None)
            if section not in ("system", "learning", "allocation") or sub is None:
                raise InvalidConfigError(f"unknown config section {section!r}")
            ftypes = {f.name: f.type for f in fields(sub)}
            if name not in ftypes:
                raise InvalidConfigError(f"unknown key {name!r} in section [{section}]")
            new = replace(sub, **{name: _coerce(ftypes[name], value, key)})
            return replace(self, **{section: new})
        if key not in ("trials", "seed", "preset"):
            raise InvalidConfigError(f"unknown config key {key!r}")
        ftype = {f.name: f.type for f in fields(self)}[key]
        return replace(self, **{key: _coerce(ftype, value, key)})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def model_dim(self) -> int:
        return MODEL_DIM

    @property
    def upload_dim(self) -> int:
        """Resource blocks per aggregation round."""
        return self.learning.compressed_dim or self.model_dim


def _coerce(ftype, value, key):
    if not isinstance(value, str):
        return value
    name = ftype if isinstance(ftype, str) else getattr(ftype, "__name__", str(ftype))
    try:
        if name == "int":
            return int(value)
        if name == "float":
            return float(value)
        if name == "bool":
            return value.strip().lower() in ("1", "true", "yes", "on")
    except ValueError:
        raise InvalidConfigError(f"{key}: cannot parse {value!r} as {name}") from None
    return value.strip()


def load_config(path) -> ExperimentConfig:
    """Read an INI file; ``[run] preset`` chooses the base preset."""
    p = Path(path)
    if not p.is_file():
        raise InvalidConfigError(f"config file {p} does not exist")
    parser = configparser.ConfigParser()
    try:
        parser.read(p)
    except configparser.Error as exc:
        raise InvalidConfigError(f"{p}: {exc}") from None
    unknown = set(parser.sections()) - {"system", "learning", "allocation", "run"}
    if unknown:
        raise InvalidConfigError(f"{p}: unknown section(s) {sorted(unknown)}")
    run = dict(parser["run"]) if parser.has_section("run") else {}
    cfg = ExperimentConfig.preset_named(run.pop("preset", "paper"))
    updates = {k: v for k, v in run.items()}
    for section in ("system", "learning", "allocation"):
        if parser.has_section(section):
            updates.update({f"{section}.{k}": v for k, v in parser[section].items()})
    return cfg.with_values(**updates)


def dump_config(cfg: ExperimentConfig) -> str:
    """INI text that :func:`load_config` reads back to ``cfg``."""
    parser = configparser.ConfigParser()
    parser["run"] = {"preset": cfg.preset, "trials": str(cfg.trials), "seed": str(cfg.seed)}
    for section in ("system", "learning", "allocation"):
        parser[section] = {k: repr(v) if isinstance(v, float) else str(v)
                           for k, v in dataclasses.asdict(getattr(cfg, section)).items()}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
