"""Pipeline configuration: one YAML file, validated up front."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import yaml

from tacklepep.ep_model import DEFAULT_GRID


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "paths": {"data_dir": "data", "work_dir": "work", "pbp": None},
    "simulate": {
        "n_games": 36, "plays_per_game": 14, "n_teams": 8, "noise_sd": 0.0,
        "penalty_rate": 0.1, "run_fraction": 0.5, "missed_tackle_rate": 0.1,
        "dominant_rate": 0.1, "breakaway_rate": 0.05,
        "pbp_seasons": 4, "pbp_rows_per_season": 5000,
    },
    "ingest": {"k_players": 5},
    "forest": {"n_trees": 1000, "mtry": None, "min_node_size": 5, "frame_stride": 3},
    "ep": {"weighting": "inverse", "grid": [dict(g) for g in DEFAULT_GRID]},
    "pep": {"missed_tackles": False},
    "mixed": {"family": "SST", "tol": 1e-8, "max_iter": 500, "run_plays_only": False,
              "include_missed": False},
    "bootstrap": {"B": 1000},
    "rank": {"min_tackles": 10},
    "report": {"play": None, "bins": 60, "top_players": 10},
}


def _merge(base: dict, over: dict, prefix="") -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if k not in base:
            raise ConfigError(f"{prefix}{k}: unknown field")
        if isinstance(base[k], dict) and base[k] and k != "grid":
            if not isinstance(v, dict):
                raise ConfigError(f"{prefix}{k}: expected a mapping")
            out[k] = _merge(base[k], v, f"{prefix}{k}.")
        else:
            out[k] = v
    return out


def _int(cfg, path, lo=None, hi=None, allow_none=False):
    sec, key = path.split(".") if "." in path else (None, path)
    v = cfg[sec][key] if sec else cfg[key]
    if v is None and allow_none:
        return
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigError(f"{path}: must lie in [{lo}, {hi if hi is not None else 'inf'}], got {v}")


def _num(cfg, path, lo=None, hi=None):
    sec, key = path.split(".")
    v = cfg[sec][key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigError(f"{path}: must lie in [{lo}, {hi}], got {v}")


def _bool(cfg, path):
    sec, key = path.split(".")
    if not isinstance(cfg[sec][key], bool):
        raise ConfigError(f"{path}: expected true/false, got {cfg[sec][key]!r}")


def validate(cfg: dict) -> dict:
    _int(cfg, "seed", 0)
    _int(cfg, "jobs", 1, 256)
    for k in ("data_dir", "work_dir"):
        if not isinstance(cfg["paths"][k], str) or not cfg["paths"][k]:
            raise ConfigError(f"paths.{k}: expected a path string")
    pbp = cfg["paths"]["pbp"]
    if pbp is not None and not Path(pbp).is_file():
        raise ConfigError(f"paths.pbp: file not found: {pbp}")
    _int(cfg, "simulate.n_games", 1)
    _int(cfg, "simulate.plays_per_game", 1)
    _int(cfg, "simulate.n_teams", 2, 16)
    _num(cfg, "simulate.noise_sd", 0.0)
    for k in ("penalty_rate", "run_fraction", "missed_tackle_rate", "dominant_rate", "breakaway_rate"):
        _num(cfg, f"simulate.{k}", 0.0, 1.0)
    _int(cfg, "simulate.pbp_seasons", 2)
    _int(cfg, "simulate.pbp_rows_per_season", 10)
    _int(cfg, "ingest.k_players", 1, 10)
    _int(cfg, "forest.n_trees", 1)
    _int(cfg, "forest.mtry", 1, allow_none=True)
    _int(cfg, "forest.min_node_size", 1)
    _int(cfg, "forest.frame_stride", 1)
    if cfg["ep"]["weighting"] not in ("inverse", "none"):
        raise ConfigError(f"ep.weighting: expected 'inverse' or 'none', got {cfg['ep']['weighting']!r}")
    grid = cfg["ep"]["grid"]
    if not isinstance(grid, list) or not grid:
        raise ConfigError("ep.grid: expected a non-empty list of parameter mappings")
    for i, g in enumerate(grid):
        for k in ("max_depth", "learning_rate", "n_estimators"):
            if not isinstance(g, dict) or k not in g:
                raise ConfigError(f"ep.grid[{i}]: missing {k}")
    _bool(cfg, "pep.missed_tackles")
    if cfg["mixed"]["family"] not in ("normal", "TF", "SST"):
        raise ConfigError(f"mixed.family: expected normal, TF or SST, got {cfg['mixed']['family']!r}")
    _num(cfg, "mixed.tol", 0.0)
    _int(cfg, "mixed.max_iter", 1)
    _bool(cfg, "mixed.run_plays_only")
    _bool(cfg, "mixed.include_missed")
    if cfg["mixed"]["include_missed"] and not cfg["pep"]["missed_tackles"]:
        raise ConfigError("mixed.include_missed: requires pep.missed_tackles: true")
    _int(cfg, "bootstrap.B", 1)
    _int(cfg, "rank.min_tackles", 0)
    _int(cfg, "report.bins", 2)
    _int(cfg, "report.top_players", 1)
    play = cfg["report"]["play"]
    if play is not None and (not isinstance(play, str) or play.count(":") != 1):
        raise ConfigError(f"report.play: expected 'game_id:play_id', got {play!r}")
    return cfg


@dataclass
class PipelineConfig:
    raw: dict
    base_dir: Path

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def jobs(self) -> int:
        return self.raw["jobs"]

    def section(self, name) -> dict:
        return self.raw[name]

    def path(self, key) -> Path:
        p = Path(self.raw["paths"][key])
        return p if p.is_absolute() else self.base_dir / p

    @property
    def data_dir(self) -> Path:
        return self.path("data_dir")

    @property
    def work_dir(self) -> Path:
        return self.path("work_dir")

    def hashable(self) -> dict:
        """The config with paths dropped, for the manifest hash."""
        d = copy.deepcopy(self.raw)
        d.pop("paths")
        return d


def load_config(path=None, seed=None, jobs=None, overrides=None) -> PipelineConfig:
    """Read, merge with defaults, apply CLI overrides, validate."""
    user = {}
    base = Path.cwd()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            user = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file is not valid YAML: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a mapping at the top level")
        base = p.resolve().parent
    cfg = _merge(DEFAULTS, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    if seed is not None:
        cfg["seed"] = seed
    if jobs is not None:
        cfg["jobs"] = jobs
    return PipelineConfig(validate(cfg), base)
