"""Experiment configuration: JSON schema, named presets, validation.

A config file is a single JSON object with sections `dataset`, `noise`,
`pipeline`, `train`, plus `seeds`, `selectors` and `out_dir`. A `preset`
field (or --preset on the CLI) merges one of the named benchmark setups
below before user overrides are applied; CLI flags override config fields.
"""

import copy
import json

from .errors import ConfigError
from .noisegen import NOISE_KINDS

# The standard synthetic benchmark: 10 classes in 32 dimensions, 1000
# training samples per class, centroid separation 4 at unit within-class std.
_BENCH_DATASET = {
    "generate": {
        "class_count": 10,
        "dim": 32,
        "samples_per_class": 1000,
        "test_samples_per_class": 200,
        "centroid_separation": 4.0,
        "intra_class_std": 1.0,
        "ood_class_count": 10,
        "seed": 0,
    }
}

_BENCH_TRAIN = {
    "epochs": 23,
    "batch_size": 128,
    "learning_rate": 0.5,
    "momentum": 0.9,
    "weight_decay": 0.0005,
    "mixup_alpha": 1.0,
    "aug_sigma": 0.1,
    "warmup_epochs": 3,
    "consistency_weight": 1.0,
    "projector_dim": 16,
}

_BENCH_AKNN = {
    "k_min_lcs1": 40,
    "k_min_lcs2": 80,
    "k_min_hcs": 5,
    "omega_init": 0.99,
    "delta_s": 0.01,
    "omega_floor": -1.0,
}


def _bench(noise, gamma_r, gamma_e):
    return {
        "dataset": copy.deepcopy(_BENCH_DATASET),
        "noise": noise,
        "pipeline": {
            "gamma_r": gamma_r,
            "gamma_e": gamma_e,
            "selector": "anne",
            "select_every": 1,
            "fixed_k": 200,
            "aknn": copy.deepcopy(_BENCH_AKNN),
        },
        "train": copy.deepcopy(_BENCH_TRAIN),
        "seeds": [1, 2, 3, 4, 5],
        "selectors": ["anne"],
    }


# (gamma_r, gamma_e) per preset follow the published per-noise-rate values.
PRESETS = {
    "bench-sym20": _bench({"kind": "symmetric", "eta": 0.2}, 0.9, 0.1),
    "bench-sym50": _bench({"kind": "symmetric", "eta": 0.5}, 0.9, 0.1),
    "bench-sym80": _bench({"kind": "symmetric", "eta": 0.8}, 0.8, 0.3),
    "bench-sym90": _bench({"kind": "symmetric", "eta": 0.9}, 0.8, 0.7),
    "bench-asym40": _bench({"kind": "asymmetric", "eta": 0.4}, 0.8, 0.1),
    "bench-idn40": _bench({"kind": "instance_dependent", "eta": 0.4}, 0.8, 0.1),
    "bench-open-60-50": _bench(
        {"kind": "openset_combined", "eta": 0.0, "rho": 0.6, "omega": 0.5}, 0.9, 0.1),
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path=None, preset=None, overrides=None):
    """Assemble a raw config dict from preset defaults, a JSON file, and
    programmatic overrides, in that precedence order."""
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    preset = preset or raw.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(
                f"preset: unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        raw = _merge(PRESETS[preset], raw)
    else:
        raw = _merge(_bench({"kind": "symmetric", "eta": 0.0}, 0.9, 0.1), raw)
    if overrides:
        raw = _merge(raw, overrides)
    raw.pop("preset", None)
    return raw


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def validate_config(raw):
    """Field-naming validation of a raw config dict."""
    _require(isinstance(raw.get("seeds"), list) and raw["seeds"],
             "seeds: must be a nonempty list of integers")
    noise = raw.get("noise", {})
    kind = noise.get("kind", "symmetric")
    _require(kind in NOISE_KINDS,
             f"noise.kind: {kind!r} is not one of {NOISE_KINDS}")
    eta = noise.get("eta", 0.0)
    _require(isinstance(eta, (int, float)) and 0.0 <= eta < 1.0,
             f"noise.eta: {eta!r} outside [0, 1)")
    ds = raw.get("dataset", {})
    _require("generate" in ds or "train_path" in ds,
             "dataset: needs either a 'generate' spec or a 'train_path'")
    if "train_path" in ds:
        _require("test_path" in ds, "dataset.test_path: required with train_path")
    from .pipeline import SELECTORS
    pl = raw.get("pipeline", {})
    sel = pl.get("selector", "anne")
    _require(sel in SELECTORS,
             f"pipeline.selector: {sel!r} is not one of {SELECTORS}")
    for s in raw.get("selectors", []):
        _require(s in SELECTORS,
                 f"selectors: {s!r} is not one of {SELECTORS}")
    return raw
