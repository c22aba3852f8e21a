"""Seeded synthetic classifier outputs with a severity-controlled
degradation model.

This is the desk-scale stand-in for running a real perturbed-sensor
benchmark: labels are uniform, logits carry a calibrated amount of signal
on the true class, and severity degrades them in two coupled ways --
rank-corrupting Gaussian logit noise followed by a flattening temperature
scale. Flattening raises entropy and lowers confidence monotonically in
severity; the noise drags accuracy down, so misclassification detection
stays a meaningful task at every level.

All randomness flows from the config seed through a Philox4x64-10
counter-based generator (fixed constants, platform-independent streams),
keyed via numpy's SeedSequence. Draws happen in a fixed order -- labels,
base logit noise, degradation noise -- and do not depend on severity, so
configs differing only in severity see paired underlying randomness.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, stats

from .core import SEVERITY_MAX, SEVERITY_MIN, LabeledSample

DEFAULT_TEMPERATURE_PER_LEVEL = 0.75
DEFAULT_NOISE_SIGMA_PER_LEVEL = 0.4

_SEED_BITS = 64


def derive_seed(base_seed: int, *parts) -> int:
    """Deterministically derive a 64-bit sub-seed from a base seed and tags.

    Hashing (sha256 over a canonical string) rather than arithmetic keeps
    distinct (condition, severity, role) streams statistically unrelated
    and reproducible across platforms.
    """
    text = "/".join([str(int(base_seed))] + [str(p) for p in parts])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


@lru_cache(maxsize=None)
def signal_strength(k_classes: int, base_accuracy: float) -> float:
    """Logit boost on the true class yielding the requested top-1 accuracy.

    With unit-normal base noise on every logit and a boost mu on the true
    one, top-1 accuracy is P(mu + Z > max of k-1 iid Z), an increasing
    function of mu; invert it by bracketed root finding.
    """

    def top1_accuracy(mu: float) -> float:
        val, _ = integrate.quad(
            lambda z: stats.norm.pdf(z) * stats.norm.cdf(z + mu) ** (k_classes - 1),
            -12.0,
            12.0,
        )
        return val

    lo, hi = 0.0, 8.0
    while top1_accuracy(hi) < base_accuracy:
        hi *= 2.0
    return optimize.brentq(
        lambda m: top1_accuracy(m) - base_accuracy, lo, hi, xtol=1e-10
    )


@dataclass(frozen=True)
class GeneratorConfig:
    k_classes: int
    n_samples: int
    base_accuracy: float
    severity: int
    seed: int
    condition: str = ""
    temperature_per_level: float = DEFAULT_TEMPERATURE_PER_LEVEL
    noise_sigma_per_level: float = DEFAULT_NOISE_SIGMA_PER_LEVEL

    def __post_init__(self):
        if self.k_classes < 2:
            raise ValueError(f"k_classes must be >= 2, got {self.k_classes}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if not 0.0 < self.base_accuracy < 1.0:
            raise ValueError(
                f"base_accuracy must be in (0, 1), got {self.base_accuracy}"
            )
        if not SEVERITY_MIN <= self.severity <= SEVERITY_MAX:
            raise ValueError(
                f"severity must be in [{SEVERITY_MIN}, {SEVERITY_MAX}], "
                f"got {self.severity}"
            )
        if self.temperature_per_level <= 0.0:
            raise ValueError("temperature_per_level must be positive")
        if self.noise_sigma_per_level < 0.0:
            raise ValueError("noise_sigma_per_level must be nonnegative")
        if not 0 <= self.seed < 2**_SEED_BITS:
            raise ValueError(f"seed must be an unsigned {_SEED_BITS}-bit integer")

    def at_severity(self, severity: int) -> "GeneratorConfig":
        return replace(self, severity=severity)


def generate_dataset(config: GeneratorConfig) -> list[LabeledSample]:
    """Draw a fully deterministic synthetic dataset.

    Clean logits are ``mu * onehot(label) + eps`` with eps iid standard
    normal and mu solved so that severity-0 top-1 accuracy matches
    ``base_accuracy``. At severity s the emitted logits are::

        (clean + s * noise_sigma_per_level * eps') * temperature_per_level**s

    i.e. noise of the configured std is injected at logit scale and the
    whole vector is then flattened. The trailing scale never reorders
    classes, so accuracy degradation is governed purely by the injected
    noise while entropy/confidence trends are governed purely by the
    temperature term.
    """
    cfg = config
    rng = _rng(cfg.seed)
    labels = rng.integers(0, cfg.k_classes, size=cfg.n_samples)
    base = rng.standard_normal((cfg.n_samples, cfg.k_classes))
    extra = rng.standard_normal((cfg.n_samples, cfg.k_classes))

    logits = base
    logits[np.arange(cfg.n_samples), labels] += signal_strength(
        cfg.k_classes, cfg.base_accuracy
    )
    noise_std = cfg.severity * cfg.noise_sigma_per_level
    degraded = (logits + noise_std * extra) * cfg.temperature_per_level**cfg.severity

    # Row-wise softmax, matching core.softmax on each row.
    shifted = degraded - degraded.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)

    tag = cfg.condition if cfg.condition else "synthetic"
    width = max(5, len(str(cfg.n_samples - 1)))
    return [
        LabeledSample(
            sample_id=f"{tag}-s{cfg.severity}-{i:0{width}d}",
            label=int(labels[i]),
            probs=probs[i],
            condition=cfg.condition,
            severity=cfg.severity,
        )
        for i in range(cfg.n_samples)
    ]


def exchangeable_split(
    samples, n_cal: int, seed: int
) -> tuple[list[LabeledSample], list[LabeledSample]]:
    """Seeded uniform shuffle, then split into (calibration, test).

    A uniform permutation keeps the two parts exchangeable, which is the
    assumption the conformal coverage guarantee rides on.
    """
    if not 0 < n_cal < len(samples):
        raise ValueError(
            f"n_cal must be in [1, {len(samples) - 1}], got {n_cal}"
        )
    perm = _rng(seed).permutation(len(samples))
    cal = [samples[i] for i in perm[:n_cal]]
    test = [samples[i] for i in perm[n_cal:]]
    return cal, test
