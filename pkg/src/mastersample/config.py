"""Experiment configuration: INI file with one section per component.

Every key is optional; the defaults reproduce the reference protocol
(λ=22 for 512-d latents, λ′=1000, 5th percentile, C=5000, τ_acc=0.6, T=20,
5% warm-up, 26400 evaluations, five seeds, nine coverage iterations).
"""

from __future__ import annotations

import configparser
import io
import zlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .evostrat import default_population_size
from .predictor import FilterConfig
from .synthworld import WorldConfig

OPTIMIZERS = ("lmmaes", "lmmaes+predictor", "random")
THRESHOLD_POLICIES = ("eer", "far_target", "combined_grid")
COVERAGE_MODES = ("single", "greedy", "clustered", "combined")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def substream(root_seed: int, name: str, *keys: int) -> int:
    """Independent seed for a named purpose, derived from the root seed."""
    ss = np.random.SeedSequence(entropy=root_seed, spawn_key=(zlib.crc32(name.encode()), *keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class PredictorSettings:
    capacity: int = 5000
    learning_rate: float = 1e-3
    batch_size: int = 32
    hidden: tuple[int, int] = (256, 128)
    train_batches: int | None = None  # None: one full epoch per generation


@dataclass(frozen=True)
class ExperimentConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    optimizers: tuple[str, ...] = OPTIMIZERS
    initial_sigma: float = 1.0
    population_size: int | None = None
    filter: FilterConfig = field(default_factory=FilterConfig)
    predictor: PredictorSettings = field(default_factory=PredictorSettings)
    budget: int = 26400
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    threshold_policy: str = "eer"
    far_target: float = 1e-3
    grid_resolution: int = 100
    coverage_mode: str = "single"
    max_iter: int = 9
    clusters: int = 9
    split_ratio: tuple[int, int] = (4038, 1711)
    root_seed: int = 0
    checkpoint_every: int = 100
    keep_checkpoints: bool = False
    output_dir: str = "results"

    @property
    def lam(self) -> int:
        return self.population_size or default_population_size(self.world.latent_dim)

    def validate(self) -> "ExperimentConfig":
        for name in self.optimizers:
            if name not in OPTIMIZERS:
                raise ConfigError(f"unknown optimizer {name!r}; choose from {OPTIMIZERS}")
        if not self.optimizers:
            raise ConfigError("no optimizers selected")
        if self.threshold_policy not in THRESHOLD_POLICIES:
            raise ConfigError(f"unknown threshold policy {self.threshold_policy!r}")
        if self.coverage_mode not in COVERAGE_MODES:
            raise ConfigError(f"unknown coverage mode {self.coverage_mode!r}")
        if (self.coverage_mode == "combined") != (self.threshold_policy == "combined_grid"):
            raise ConfigError("combined coverage mode requires threshold policy combined_grid and vice versa")
        if self.budget < self.lam:
            raise ConfigError(
                f"budget of {self.budget} evaluations does not cover one generation of λ={self.lam}"
            )
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.filter.population != self.lam:
            raise ConfigError(f"filter population {self.filter.population} differs from λ={self.lam}")
        if not 0 < self.far_target < 1:
            raise ConfigError("far_target must be in (0, 1)")
        if self.max_iter < 1 or self.clusters < 1:
            raise ConfigError("max_iter and clusters must be positive")
        if min(self.split_ratio) < 1:
            raise ConfigError("split ratio parts must be positive")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be positive")
        if self.coverage_mode == "clustered" and self.clusters > self.n_train:
            raise ConfigError("more clusters than training identities")
        return self

    @property
    def n_train(self) -> int:
        a, b = self.split_ratio
        return self.world.n_identities * a // (a + b)


def split_identities(n: int, ratio: tuple[int, int], seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded identity-level train/test split; train size is ``floor(n a/(a+b))``."""
    a, b = ratio
    n_train = n * a // (a + b)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _opt_int(text: str) -> int | None:
    text = text.strip()
    return None if text in ("", "none", "None", "auto") else int(text)


def _coerce(kind: type, text: str):
    if kind is bool:
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return kind(text)


def _section(parser, name: str) -> dict:
    return dict(parser[name]) if parser.has_section(name) else {}


def _typed(cls, raw: dict, section: str) -> dict:
    types = {f.name: f.type for f in fields(cls)}
    out = {}
    for key, text in raw.items():
        if key not in types:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        kind = types[key]
        kind = {"int": int, "float": float, "str": str, "bool": bool}.get(kind, kind)
        try:
            out[key] = _coerce(kind, text) if isinstance(kind, type) else text
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from exc
    return out


def load_config(source: str | Path | None = None, text: str | None = None,
                root_seed: int | None = None) -> ExperimentConfig:
    """Parse an INI file (or string) into a validated :class:`ExperimentConfig`.

    ``root_seed`` overrides ``[experiment] root_seed``; the world seed is
    derived from the root seed unless ``[world] seed`` is set explicitly.
    """
    parser = configparser.ConfigParser()
    try:
        if text is not None:
            parser.read_string(text)
        elif source is not None:
            with open(source) as fh:
                parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc

    known = {"world", "optimizer", "predictor", "threshold", "coverage", "experiment"}
    extra = set(parser.sections()) - known
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")

    try:
        exp = _section(parser, "experiment")
        root_seed = int(exp.pop("root_seed", 0)) if root_seed is None else root_seed
        exp.pop("root_seed", None)

        world_raw = _section(parser, "world")
        world_kw = _typed(WorldConfig, world_raw, "world")
        world_kw.setdefault("seed", substream(root_seed, "world"))
        world = WorldConfig(**world_kw)

        opt = _section(parser, "optimizer")
        optimizers = tuple(t.strip() for t in opt.pop("names", ",".join(OPTIMIZERS)).split(",") if t.strip())
        initial_sigma = float(opt.pop("initial_sigma", 1.0))
        population_size = _opt_int(opt.pop("population_size", ""))
        if opt:
            raise ConfigError(f"[optimizer] unknown keys {sorted(opt)}")
        lam = population_size or default_population_size(world.latent_dim)

        pred = _section(parser, "predictor")
        filter_kw = {"population": lam}
        for key, kind in (("oversample", int), ("percentile", float), ("accuracy_threshold", float),
                          ("patience", int), ("warmup_fraction", float)):
            if key in pred:
                filter_kw[key] = kind(pred.pop(key))
        settings_kw = {}
        for key, kind in (("capacity", int), ("learning_rate", float), ("batch_size", int)):
            if key in pred:
                settings_kw[key] = kind(pred.pop(key))
        if "hidden" in pred:
            settings_kw["hidden"] = _parse_int_list(pred.pop("hidden"))
        if "train_batches" in pred:
            settings_kw["train_batches"] = _opt_int(pred.pop("train_batches"))
        if pred:
            raise ConfigError(f"[predictor] unknown keys {sorted(pred)}")

        thr = _section(parser, "threshold")
        cov = _section(parser, "coverage")
        cfg = ExperimentConfig(
            world=world,
            optimizers=optimizers,
            initial_sigma=initial_sigma,
            population_size=population_size,
            filter=FilterConfig(**filter_kw),
            predictor=PredictorSettings(**settings_kw),
            budget=int(exp.pop("budget", 26400)),
            seeds=_parse_int_list(exp.pop("seeds", "0,1,2,3,4")),
            threshold_policy=thr.pop("policy", "eer"),
            far_target=float(thr.pop("far_target", 1e-3)),
            grid_resolution=int(thr.pop("grid_resolution", 100)),
            coverage_mode=cov.pop("mode", "single"),
            max_iter=int(cov.pop("max_iter", 9)),
            clusters=int(cov.pop("clusters", 9)),
            split_ratio=tuple(int(t) for t in exp.pop("split_ratio", "4038:1711").split(":")),
            root_seed=root_seed,
            checkpoint_every=int(exp.pop("checkpoint_every", 100)),
            keep_checkpoints=_coerce(bool, exp.pop("keep_checkpoints", "false")),
            output_dir=exp.pop("output_dir", "results"),
        )
        for name, rest in (("threshold", thr), ("coverage", cov), ("experiment", exp)):
            if rest:
                raise ConfigError(f"[{name}] unknown keys {sorted(rest)}")
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def dump_config(cfg: ExperimentConfig) -> str:
    """Resolved config as INI text; ``load_config(text=dump_config(c)) == c``."""
    parser = configparser.ConfigParser()
    parser["world"] = {k: str(v) for k, v in cfg.world.to_dict().items()}
    parser["optimizer"] = {
        "names": ", ".join(cfg.optimizers),
        "initial_sigma": repr(cfg.initial_sigma),
        "population_size": "auto" if cfg.population_size is None else str(cfg.population_size),
    }
    f, p = cfg.filter, cfg.predictor
    parser["predictor"] = {
        "oversample": str(f.oversample),
        "percentile": repr(f.percentile),
        "accuracy_threshold": repr(f.accuracy_threshold),
        "patience": str(f.patience),
        "warmup_fraction": repr(f.warmup_fraction),
        "capacity": str(p.capacity),
        "learning_rate": repr(p.learning_rate),
        "batch_size": str(p.batch_size),
        "hidden": ", ".join(str(h) for h in p.hidden),
        "train_batches": "none" if p.train_batches is None else str(p.train_batches),
    }
    parser["threshold"] = {
        "policy": cfg.threshold_policy,
        "far_target": repr(cfg.far_target),
        "grid_resolution": str(cfg.grid_resolution),
    }
    parser["coverage"] = {"mode": cfg.coverage_mode, "max_iter": str(cfg.max_iter), "clusters": str(cfg.clusters)}
    parser["experiment"] = {
        "budget": str(cfg.budget),
        "seeds": ", ".join(str(s) for s in cfg.seeds),
        "split_ratio": f"{cfg.split_ratio[0]}:{cfg.split_ratio[1]}",
        "root_seed": str(cfg.root_seed),
        "checkpoint_every": str(cfg.checkpoint_every),
        "keep_checkpoints": str(cfg.keep_checkpoints).lower(),
        "output_dir": cfg.output_dir,
    }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(cfg, **changes).validate()
