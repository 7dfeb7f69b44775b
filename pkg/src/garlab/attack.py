"""Adversary strategies for the Byzantine nodes.

An omniscient adversary sees every honest gradient of the current round and
fabricates the f Byzantine reports. Strategies:

* ``limited_norm``: all Byzantine nodes report the honest mean shifted by
  epsilon on one coordinate. The copies are identical, so their pairwise
  distance is zero.
* ``seesaw``: Byzantine nodes mimic a reference gradient chosen from the
  honest set (the medoid under the geometric median by default, or the
  coordinate-wise median), each perturbed by a deterministic spherical
  Gaussian direction of norm epsilon * (1 + ||reference||). Together with
  the reference's owner they form an f+1 clique of near-identical reports
  that nearest-neighbour selection rules favour.
* ``sign_flip``: all Byzantine nodes report the honest mean scaled by -c,
  diluting a plain mean toward zero.

Outputs are a pure function of (honest gradients, round index, rng seed):
no global randomness, no hidden state.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import vecmath
from .errors import ConfigError, DimensionMismatchError, EmptySetError

STRATEGIES = ("none", "limited_norm", "seesaw", "sign_flip")
SEESAW_REFERENCES = ("geomedian_medoid", "coordinate_median")

#: Per-strategy epsilon used when AttackSpec.epsilon is left unset. The
#: seesaw bound is relative to the reference norm; the limited-norm shift
#: is absolute.
DEFAULT_EPSILON = {"none": 0.0, "limited_norm": 1.0, "seesaw": 1e-3,
                   "sign_flip": 0.0}


@dataclass(frozen=True)
class AttackSpec:
    """Adversary strategy and its knobs."""
    strategy: str = "none"
    epsilon: float | None = None  # None -> per-strategy default
    target_dim: int = 0
    c: float = 1.0
    reference: str = "geomedian_medoid"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"attack.strategy: unknown strategy {self.strategy!r} "
                f"(choose from {', '.join(STRATEGIES)})")
        if self.epsilon is not None and not self.epsilon >= 0.0:
            raise ConfigError(f"attack.epsilon: must be >= 0, got {self.epsilon}")
        if self.target_dim < 0:
            raise ConfigError(f"attack.target_dim: must be >= 0, got {self.target_dim}")
        if not self.c > 0.0:
            raise ConfigError(f"attack.c: must be > 0, got {self.c}")
        if self.reference not in SEESAW_REFERENCES:
            raise ConfigError(
                f"attack.reference: unknown reference {self.reference!r} "
                f"(choose from {', '.join(SEESAW_REFERENCES)})")

    def resolved_epsilon(self) -> float:
        return DEFAULT_EPSILON[self.strategy] if self.epsilon is None else self.epsilon


@dataclass(frozen=True)
class AdversaryView:
    """Everything the adversary is allowed to see in one round."""
    honest_gradients: tuple
    round_index: int
    rng_seed: int


def limited_norm_attack(view: AdversaryView, spec: AttackSpec, f: int) -> list[np.ndarray]:
    """f identical copies of the honest mean, shifted by epsilon on one coordinate."""
    if f < 1:
        raise EmptySetError("limited_norm_attack requires f >= 1")
    stack = vecmath.as_gradient_stack(view.honest_gradients)
    if spec.target_dim >= stack.shape[1]:
        raise DimensionMismatchError(
            f"target_dim {spec.target_dim} out of range for dimension {stack.shape[1]}")
    forged = vecmath.ordered_mean(stack)
    forged[spec.target_dim] += spec.resolved_epsilon()
    return [forged.copy() for _ in range(f)]


def seesaw_reference(view: AdversaryView, spec: AttackSpec) -> np.ndarray:
    """The honest gradient the seesaw copies: medoid or coordinate median."""
    stack = vecmath.as_gradient_stack(view.honest_gradients)
    if spec.reference == "coordinate_median":
        return vecmath.coordinate_median(stack)
    return vecmath.medoid(stack)[1]


def seesaw_attack(view: AdversaryView, spec: AttackSpec, f: int) -> list[np.ndarray]:
    """f near-copies of the reference gradient.

    Copy i is reference + delta_i where delta_i is a spherical-Gaussian
    direction scaled to norm epsilon * (1 + ||reference||), drawn from a
    generator seeded by (rng_seed, round_index, i). Identical views always
    produce identical outputs.
    """
    if f < 1:
        raise EmptySetError("seesaw_attack requires f >= 1")
    reference = seesaw_reference(view, spec)
    bound = spec.resolved_epsilon() * (1.0 + float(np.linalg.norm(reference)))
    outputs = []
    for i in range(f):
        if bound > 0.0:
            rng = np.random.default_rng([view.rng_seed, view.round_index, i])
            direction = rng.standard_normal(reference.size)
            norm = float(np.linalg.norm(direction))
            if norm > 0.0:
                outputs.append(reference + direction * (bound / norm))
                continue
        outputs.append(reference.copy())
    return outputs


def sign_flip_attack(view: AdversaryView, spec: AttackSpec, f: int) -> list[np.ndarray]:
    """f identical copies of the honest mean scaled by -c."""
    if f < 1:
        raise EmptySetError("sign_flip_attack requires f >= 1")
    stack = vecmath.as_gradient_stack(view.honest_gradients)
    forged = (-spec.c) * vecmath.ordered_mean(stack)
    return [forged.copy() for _ in range(f)]


def generate_malicious(view: AdversaryView, spec: AttackSpec, f: int) -> list[np.ndarray]:
    """Byzantine reports for one round; empty when f=0 or no attack is set."""
    if f < 0:
        raise ConfigError(f"f must be >= 0, got {f}")
    if f == 0 or spec.strategy == "none":
        return []
    if spec.strategy == "limited_norm":
        return limited_norm_attack(view, spec, f)
    if spec.strategy == "seesaw":
        return seesaw_attack(view, spec, f)
    return sign_flip_attack(view, spec, f)
