"""PGD adversarial example generation guided by representative hash codes.

Non-targeted attacks push the adversarial code away from the query's
representative code (maximize Hamming distance); targeted attacks pull
toward the representative code of an attacker-chosen disjoint label.
Inputs live in [0, 1]^d and perturbations in an L-infinity epsilon ball.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import netcore
from .hashmodel import HashModel, logits

ALPHA_STAGES = (0.2, 0.3, 0.5, 0.7, 1.0)

NONTARGETED = "nontargeted"
TARGETED = "targeted"


class AttackError(ValueError):
    pass


@dataclass
class AttackConfig:
    epsilon: float = 8 / 255
    step_size: float = 1 / 255
    iterations: int = 100
    alpha: float | str = "scheduled"  # "scheduled" or a fixed constant
    mode: str = NONTARGETED
    sign_gradient: bool = True  # raw-gradient ascent available for ablation

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise AttackError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.step_size <= 0:
            raise AttackError("step size must be positive")
        if self.iterations < 1:
            raise AttackError("iterations must be >= 1")
        if self.mode not in (NONTARGETED, TARGETED):
            raise AttackError(f"unknown attack mode {self.mode!r}")
        if isinstance(self.alpha, str):
            if self.alpha != "scheduled":
                raise AttackError(f"alpha must be 'scheduled' or a number")
        elif not 0.0 < float(self.alpha) <= 1.0:
            raise AttackError(f"fixed alpha must lie in (0, 1], got {self.alpha}")
        if self.step_size > self.epsilon:
            warnings.warn("step size exceeds epsilon; one step can hit the ball edge")


@dataclass
class AdversarialExample:
    x_adv: np.ndarray
    x_origin: np.ndarray
    guide_code: np.ndarray
    loss_trace: list[float] = field(default_factory=list)


def alpha_at(t, total, alpha="scheduled"):
    """Code-relaxation sharpness for PGD iteration t of `total`.

    Reference schedule (total=100): 0.1 for the first 50 iterations, then
    five 10-iteration stages at 0.2/0.3/0.5/0.7/1.0. Other totals keep the
    same shape: first half 0.1, second half split into five equal stages.
    """
    if not 0 <= t < total:
        raise AttackError(f"iteration {t} outside [0, {total})")
    if alpha != "scheduled":
        return float(alpha)
    first_len = total - total // 2
    if t < first_len or total < 2:
        return 0.1
    stage = (t - first_len) * len(ALPHA_STAGES) // (total // 2)
    return ALPHA_STAGES[min(stage, len(ALPHA_STAGES) - 1)]


def adv_loss(model: HashModel, x, guide, alpha=1.0, mode=NONTARGETED):
    """Attack objective and its input gradient.

    Non-targeted: -(1/K) guide . tanh(alpha f(x)); targeted flips the sign.
    """
    guide = np.asarray(guide, dtype=np.float64)
    k = model.hash_length
    if guide.shape[-1] != k:
        raise AttackError(f"guide code length {guide.shape[-1]} != K={k}")
    sign = 1.0 if mode == TARGETED else -1.0
    trace = logits(model, x)
    h = np.tanh(alpha * trace.output)
    value = float(np.mean(np.sum(guide * h, axis=-1))) * sign / k
    upstream = sign * (alpha / k) * guide * (1.0 - h**2)
    if upstream.ndim == 2:
        upstream = upstream / upstream.shape[0]
    grad = netcore.grad_input(model.net, trace, upstream)
    return value, grad


def project_ball(x_candidate, x_origin, epsilon):
    """Clamp into the L-infinity ball around x_origin, then into [0, 1]."""
    x_candidate = np.asarray(x_candidate, dtype=np.float64)
    x_origin = np.asarray(x_origin, dtype=np.float64)
    if x_candidate.shape != x_origin.shape:
        raise AttackError("candidate and origin shapes differ")
    clipped = np.clip(x_candidate, x_origin - epsilon, x_origin + epsilon)
    clipped = np.clip(clipped, 0.0, 1.0)
    # Clamping to x_origin +/- epsilon can leave the recomputed difference a
    # half-ulp above epsilon; nudge such coordinates one ulp toward the origin
    # so the budget holds for the difference as actually measured downstream.
    for _ in range(3):
        over = np.abs(clipped - x_origin) > epsilon
        if not over.any():
            break
        clipped = np.where(over, np.nextafter(clipped, x_origin), clipped)
    return clipped


def pgd_attack(model: HashModel, x, guide, cfg: AttackConfig) -> AdversarialExample:
    """Iterative sign-gradient ascent on the attack objective.

    Works on a single input (d,) or a batch (n, d) with per-sample guides.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.min() < 0.0 or x.max() > 1.0:
        raise AttackError("inputs must be normalized into [0, 1]")
    x_adv = x.copy()
    trace = []
    for t in range(cfg.iterations):
        alpha = alpha_at(t, cfg.iterations, cfg.alpha)
        value, grad = adv_loss(model, x_adv, guide, alpha, cfg.mode)
        if not np.isfinite(grad).all():
            raise AttackError(f"non-finite attack gradient at iteration {t}")
        trace.append(value)
        # ascend: the objective is maximized for both attack modes
        direction = np.sign(grad) if cfg.sign_gradient else grad
        x_adv = project_ball(x_adv + cfg.step_size * direction, x, cfg.epsilon)
    return AdversarialExample(x_adv=x_adv, x_origin=x, guide_code=np.asarray(guide),
                              loss_trace=trace)


def pick_target_label(y, label_pool, rng):
    """Seeded uniform choice of a pool label sharing no class with y."""
    y = np.asarray(y, dtype=np.float64)
    pool = np.asarray(label_pool, dtype=np.float64)
    disjoint = np.flatnonzero(pool @ y == 0)
    if disjoint.size == 0:
        raise AttackError("no label in the pool is disjoint from the query label")
    return label_pool[rng.choice(disjoint)]
