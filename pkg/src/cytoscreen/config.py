"""Versioned JSON run configuration."""

import copy
import hashlib
import json
from pathlib import Path

from .exceptions import ConfigurationError

CONFIG_VERSION = 1

DEFAULTS = {
    "config_version": CONFIG_VERSION,
    "seed": 0,
    "data": {"herlev": None, "multicell": None},
    "synth": {"cells": 350, "slides": 40, "size": 64, "slide_size": 256, "cells_per_slide": 5},
    "split": {"train": 0.70, "val": 0.15, "test": 0.15, "trials": 5},
    "texture": {"levels": 8},
    "detector": {"median_window": 5, "clahe_tiles": [8, 8], "clip_limit": 2.0, "threshold": "otsu",
                 "fixed_threshold": None, "min_area": 30, "pad": 20},
    "segmentation": {"routing": "selective", "homogeneity_threshold": "auto", "n_classes": 3,
                     "patch_size": 32, "band": 2, "per_class": 8, "stride": 1, "near_fraction": 0.5,
                     "epochs": 5, "batch_size": 32, "lr": 0.01, "momentum": 0.9, "loss": "cross_entropy",
                     "clahe_tiles": [8, 8], "clip_limit": 2.0},
    "classifier": {"depths": ["conv1"], "hidden": 256, "epochs": 40, "batch_size": 32, "lr": 0.001,
                   "momentum": 0.9, "lr_decay": 0.1, "lr_decay_epoch": 150, "loss": "mse_one_hot",
                   "preprocessing": "unit", "weights": None, "cascade": True, "binary": True,
                   "ablation": True, "augment_train": None, "augment_val": None},
    "multicell": {"epochs": 30, "batch_size": 32, "lr": 0.01, "momentum": 0.9, "conv_filters": 32,
                  "n_convs": 2, "dropout_p": 0.5, "loss": "mse_one_hot"},
}

_PATH_KEYS = (("data", "herlev"), ("data", "multicell"), ("classifier", "weights"))


def _merge(base, override, where=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigurationError(f"unknown config key {where + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"config key {where + key!r} must be an object")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def validate(cfg):
    if cfg.get("config_version") != CONFIG_VERSION:
        raise ConfigurationError(f"config_version must be {CONFIG_VERSION}, got {cfg.get('config_version')!r}")
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool):
        raise ConfigurationError(f"seed must be an integer, got {cfg['seed']!r}")
    for section, key in _PATH_KEYS:
        p = cfg[section][key]
        if p is not None and not Path(p).exists():
            raise ConfigurationError(f"{section}.{key}: path {p} does not exist")
    seg = cfg["segmentation"]
    if seg["routing"] not in ("selective", "none", "all"):
        raise ConfigurationError(f"segmentation.routing must be selective|none|all, got {seg['routing']!r}")
    t = seg["homogeneity_threshold"]
    if t != "auto" and not (isinstance(t, (int, float)) and 0 <= t <= 1):
        raise ConfigurationError(f"segmentation.homogeneity_threshold must be 'auto' or in [0, 1], got {t!r}")
    for d in cfg["classifier"]["depths"]:
        if d not in ("conv1", "conv3", "conv5"):
            raise ConfigurationError(f"classifier.depths: unknown depth {d!r}")
    return cfg


def load_config(path=None, overrides=None):
    """Defaults, then the JSON file at ``path``, then ``overrides``; validated."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: config must be a JSON object")
        if "config_version" not in data:
            raise ConfigurationError(f"{path}: missing config_version")
        cfg = _merge(cfg, data)
    if overrides:
        cfg = _merge(cfg, overrides)
    return validate(cfg)


def config_hash(cfg):
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
