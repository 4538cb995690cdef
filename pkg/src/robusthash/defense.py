"""Minimax adversarial training for hashing models.

Each epoch: refresh the training-set code database with the current model,
rebuild the per-label representative codes, then for every batch generate
adversarial samples with frozen parameters (inner maximization) and take
one SGD step on the combined objective
lambda * L_adv + mu * L_qua + L_ori (outer minimization).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import netcore
from .attack import NONTARGETED, AttackConfig, pgd_attack
from .hashmodel import HashModel, hash_code, original_loss, quantization_loss
from .mainstay import MainstayCache


class DefenseError(ValueError):
    """Raised on invalid configs or diverged training.

    When training diverges mid-run, `last_good` holds the model as of the
    last completed epoch so callers can checkpoint it.
    """

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


@dataclass
class TrainConfig:
    """Minimax training hyperparameters.

    The inner-attack budget defaults to 1.5x the evaluation budget of
    8/255: training against slightly larger perturbations buys margin
    against attacks run at the nominal budget.
    """

    epochs: int = 20
    batch_size: int = 8
    learning_rate: float = 0.02
    momentum: float = 0.9
    epsilon: float = 12 / 255
    step_size: float = 3 / 255
    attack_iterations: int = 50
    lam: float = 1.0  # weight of the adversarial loss term
    mu: float = 1e-4  # weight of the quantization term
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.attack_iterations < 1:
            raise DefenseError("epochs must be >= 0, batch size and iterations >= 1")
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise DefenseError("learning rate and epsilon must be positive")
        if self.lam < 0 or self.mu < 0:
            raise DefenseError("loss weights must be non-negative")


@dataclass
class EpochRecord:
    clean_loss: float
    adversarial_loss: float
    quantization_loss: float
    total_loss: float


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)


def inner_maximization(model: HashModel, x_batch, mainstay_codes, epsilon,
                       step_size, iterations):
    """Adversarial batch via non-targeted PGD with the scheduled relaxation.

    Using the same alpha warm-up as evaluation-time attacks keeps the model
    from hiding behind saturated tanh gradients that a short fixed-alpha
    attack cannot exploit but a scheduled one can.
    """
    cfg = AttackConfig(
        epsilon=epsilon,
        step_size=step_size,
        iterations=iterations,
        alpha="scheduled",
        mode=NONTARGETED,
    )
    return pgd_attack(model, x_batch, mainstay_codes, cfg).x_adv


def total_loss(model: HashModel, x_clean, x_adv, mainstay_codes, labels, lam, mu):
    """Combined training objective and parameter grads.

    Every term is a batch mean (the clean term per pair, the adversarial and
    quantization terms per sample), so the weights carry the same meaning at
    any batch size. Returns (total, clean, adversarial, quantization, grads).
    With lam = mu = 0 this is exactly the clean pairwise loss.
    """
    x_clean = np.asarray(x_clean, dtype=np.float64)
    x_adv = np.asarray(x_adv, dtype=np.float64)
    if x_clean.shape != x_adv.shape:
        raise DefenseError("clean and adversarial batches misaligned")
    mainstay_codes = np.asarray(mainstay_codes, dtype=np.float64)
    if mainstay_codes.shape[0] != x_clean.shape[0]:
        raise DefenseError("one representative code per batch sample required")

    clean_value, grads = original_loss(model, x_clean, labels)
    total = clean_value
    adv_value = 0.0
    qua_value = 0.0
    if lam > 0 or mu > 0:
        from .hashmodel import logits, sign_code

        trace = logits(model, x_adv)
        h = np.tanh(trace.output)
        k = model.hash_length
        n = x_adv.shape[0]
        # adversarial term: -(1/nK) sum_i b_mi . tanh(f(x'_i))
        adv_value = float(-np.sum(mainstay_codes * h) / (k * n))
        b = sign_code(trace.output).astype(np.float64)
        qua_value = float(np.sum((h - b) ** 2)) / n
        upstream = (
            lam * (-mainstay_codes / k) + mu * 2.0 * (h - b)
        ) * (1.0 - h**2) / n
        adv_grads = netcore.grad_params(model.net, trace, upstream)
        grads = netcore.add_grads(grads, adv_grads)
        total = total + lam * adv_value + mu * qua_value
    return total, clean_value, adv_value, qua_value, grads


def adversarial_train(model: HashModel, features, labels, cfg: TrainConfig):
    """Run the minimax training loop; returns (defended model, log)."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.shape[0] == 0 or features.shape[0] != labels.shape[0]:
        raise DefenseError("dataset empty or features/labels misaligned")
    rng = np.random.default_rng(cfg.seed)
    model = model.copy()
    state = None
    log = TrainLog()
    n = features.shape[0]
    last_good = model.copy()
    for _ in range(cfg.epochs):
        # refresh codes and representative codes once per epoch
        db_codes = hash_code(model, features)
        cache = MainstayCache(db_codes, labels)
        order = rng.permutation(n)
        sums = np.zeros(4)
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if idx.size < 2:
                continue
            guides = cache.for_labels(labels[idx])
            x_adv = inner_maximization(
                model, features[idx], guides, cfg.epsilon, cfg.step_size,
                cfg.attack_iterations,
            )
            total, clean, adv, qua, grads = total_loss(
                model, features[idx], x_adv, guides, labels[idx], cfg.lam, cfg.mu
            )
            if not np.isfinite(total):
                raise DefenseError(
                    "adversarial training diverged: non-finite loss",
                    last_good=last_good,
                )
            model.net, state = netcore.sgd_step(
                model.net, grads, cfg.learning_rate, cfg.momentum, state
            )
            sums += (clean, adv, qua, total)
            batches += 1
        record = EpochRecord(*(sums / max(batches, 1)))
        log.epochs.append(record)
        last_good = model.copy()
    return model, log
