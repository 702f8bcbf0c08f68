"""Training loop: Adam with a linear learning-rate decay over the five model
variants (baseline / sup1 / sup2 / con1 / con2)."""

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from . import fileio
from .errors import ConfigError, ContractViolationError
from .losses import LossConfig, total_loss
from .mixup import BatchSampler
from .model import Model
from .seeding import derive_seed

logger = logging.getLogger(__name__)

# Variant table: mix-up probability, which loss terms are active, and whether
# the clean class is excluded from the contrastive anchors.
VARIANTS = {
    "baseline": dict(p_mixup=0.0, use_pseudo=False, use_scl=False, exclude_clean=False),
    "sup1": dict(p_mixup=0.5, use_pseudo=True, use_scl=False, exclude_clean=False),
    "sup2": dict(p_mixup=1.0, use_pseudo=True, use_scl=False, exclude_clean=False),
    "con1": dict(p_mixup=1.0, use_pseudo=True, use_scl=True, exclude_clean=False),
    "con2": dict(p_mixup=1.0, use_pseudo=True, use_scl=True, exclude_clean=True),
}


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 8
    lr_start: float = 2e-3
    lr_end: float = 1e-5
    seed: int = 0

    @classmethod
    def paper(cls):
        return cls(epochs=100, batch_size=64, lr_start=1e-4, lr_end=1e-6)


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * p.grad
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * p.grad * p.grad
            m_hat = self.m[i] / (1.0 - b1**self.t)
            v_hat = self.v[i] / (1.0 - b2**self.t)
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def variant_loss_config(base: LossConfig, variant: str, clean_class: int) -> LossConfig:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; pick one of {sorted(VARIANTS)}")
    if VARIANTS[variant]["exclude_clean"]:
        return replace(base, excluded_classes=(clean_class,))
    return replace(base, excluded_classes=())


def train(model: Model, utterances, variant: str, train_cfg: TrainConfig,
          loss_cfg: LossConfig, clean_class: int, log_path=None):
    """Train a model in place; returns the per-step loss history."""
    spec = VARIANTS[variant]
    loss_cfg = variant_loss_config(loss_cfg, variant, clean_class)
    sampler = BatchSampler(
        utterances,
        p_mixup=spec["p_mixup"],
        mode="train",
        rng=np.random.default_rng(derive_seed(train_cfg.seed, f"sampler/{variant}")),
        clean_class=clean_class,
    )
    stream = iter(sampler)
    slice_rng = np.random.default_rng(derive_seed(train_cfg.seed, f"slice/{variant}"))

    steps_per_epoch = max(len(utterances) // train_cfg.batch_size, 1)
    total_steps = train_cfg.epochs * steps_per_epoch
    opt = Adam([t for _, t in model.parameters()])
    history = []

    for step in range(total_steps):
        frac = step / max(total_steps - 1, 1)
        lr = train_cfg.lr_start + frac * (train_cfg.lr_end - train_cfg.lr_start)

        batch = [next(stream) for _ in range(train_cfg.batch_size)]
        outputs = model.forward_batch([ex.signal for ex in batch], training=True)

        starts, crops = [], []
        for ex in batch:
            L = len(ex.labels)
            win = min(loss_cfg.slice_frames, L)
            l0 = int(slice_rng.integers(0, L - win + 1))
            starts.append(l0)
            crops.append(ex.signal.samples[l0 * 320 : (l0 + win) * 320])
        slice_outputs = model.forward_batch(crops, training=True, update_running=False)

        loss, terms = total_loss(
            outputs, slice_outputs, starts, batch, loss_cfg,
            use_pseudo=spec["use_pseudo"], use_scl=spec["use_scl"],
        )
        if not np.isfinite(loss.data):
            raise ContractViolationError(f"non-finite loss at step {step}")
        model.zero_grad()
        ad.backward(loss)
        opt.step(lr)
        history.append({"step": step, "lr": lr, **terms})

    logger.info(
        "trained %s: %d steps, final loss %.4f, mix-up fallbacks %d",
        variant, total_steps, history[-1]["total"] if history else float("nan"),
        sampler.fallbacks,
    )
    if log_path is not None:
        cols = ["step", "lr", "quality", "consistency", "pseudo", "contrastive", "total"]
        fileio.write_csv(
            log_path, cols, [[h.get(c, 0.0) for c in cols] for h in history]
        )
    return history
