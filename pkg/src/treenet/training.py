"""Deterministic SGD training and PSNR/SSIM evaluation of compiled graphs."""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .architecture.execute import backward, forward, init_weights, predict
from .errors import DivergenceError, ShapeError, SpecError
from .metrics import psnr, ssim
from .tensor_core import ConvWeights, Tensor, mse_loss, mse_loss_backward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 0.1
    lr_decay_factor: float = 10.0
    decay_every: int = 20
    total_epochs: int = 80
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 16
    grad_clip_norm: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("initial_lr", "lr_decay_factor", "grad_clip_norm"):
            if not getattr(self, name) > 0:
                raise SpecError(f"{name} must be positive, got {getattr(self, name)}")
        if self.momentum < 0 or self.weight_decay < 0:
            raise SpecError("momentum and weight_decay must be non-negative")
        if self.total_epochs < 1 or self.batch_size < 1 or self.decay_every < 1:
            raise SpecError("total_epochs, batch_size and decay_every must be >= 1")
        if self.decay_every > self.total_epochs:
            raise SpecError(f"decay_every ({self.decay_every}) exceeds total_epochs ({self.total_epochs})")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss: float
    psnr: float | None = None


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    clipped_norms: list = field(default_factory=list)
    snapshot_id: str = ""

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "lr", "loss", "psnr"])
        for r in self.records:
            w.writerow([r.epoch, repr(r.lr), repr(r.loss), "" if r.psnr is None else repr(r.psnr)])
        return buf.getvalue()


def lr_schedule(config, epoch):
    """Step decay: ``initial_lr / decay_factor ** (epoch // decay_every)``."""
    if not 0 <= epoch < config.total_epochs:
        raise SpecError(f"epoch {epoch} outside 0..{config.total_epochs - 1}")
    return config.initial_lr / config.lr_decay_factor ** (epoch // config.decay_every)


def sgd_momentum_step(weights, grads, velocity, lr, momentum, weight_decay):
    """Classical momentum with L2 folded into the gradient.

    ``v <- momentum * v + (g + weight_decay * w)``; ``w <- w - lr * v``.
    Inputs are left untouched; returns ``(new_weights, new_velocity)``.
    """
    if not len(weights) == len(grads) == len(velocity):
        raise ShapeError(f"got {len(weights)} weights, {len(grads)} grads, {len(velocity)} velocities")
    new_w, new_v = [], []
    for i, (w, g, v) in enumerate(zip(weights, grads, velocity)):
        wd, gd = _arr(w), _arr(g)
        if not wd.shape == gd.shape == v.shape:
            raise ShapeError(f"slot {i}: weight {wd.shape}, grad {gd.shape}, velocity {v.shape} differ")
        v2 = momentum * v + (gd + weight_decay * wd)
        new_v.append(v2)
        w2 = wd - lr * v2
        new_w.append(ConvWeights(w2, w.dilation) if isinstance(w, ConvWeights) else w2)
    return new_w, new_v


def _arr(x):
    return x.data if isinstance(x, ConvWeights) else np.asarray(x)


def global_norm(grads):
    return math.sqrt(sum(float(np.sum(_arr(g) ** 2)) for g in grads))


def clip_by_global_norm(grads, max_norm):
    """Scale all gradients together so their joint L2 norm is at most ``max_norm``."""
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return [_arr(g) for g in grads], norm
    scale = max_norm / norm
    return [_arr(g) * scale for g in grads], norm


def weights_digest(weights):
    h = hashlib.sha256()
    for w in weights:
        h.update(np.ascontiguousarray(_arr(w), dtype="<f8").tobytes())
    return h.hexdigest()


def _batch(samples, idx):
    x = samples.inputs[idx][:, None]
    y = samples.targets[idx][:, None]
    return Tensor(x), Tensor(y)


def loss_and_grads(graph, weights, x, y):
    out, acts = forward(graph, weights, x)
    loss = mse_loss(out, y)
    return loss, backward(graph, weights, acts, mse_loss_backward(out, y))


def train(graph, dataset, config, weights=None, eval_images=None, border_crop=0, progress=None):
    """Fit ``graph`` to ``dataset`` with momentum SGD; returns ``(weights, history)``.

    The graph's own ``skip_add`` makes the network predict the residual over
    the interpolated input, so plain MSE against the HR patch is the residual
    loss. Batches are reshuffled every epoch from ``config.rng_seed``.
    """
    if len(dataset) == 0:
        raise SpecError("training dataset is empty")
    if graph.input_channels != 1 or graph.output_channels != 1:
        raise SpecError(f"{graph.name}: training expects 1-channel input and output")
    weights = init_weights(graph, config.rng_seed) if weights is None else list(weights)
    velocity = [np.zeros(s.shape) for s in graph.weight_slots]
    rng = np.random.default_rng(config.rng_seed)
    history = TrainHistory()
    step = 0
    n = len(dataset)
    for epoch in range(config.total_epochs):
        lr = lr_schedule(config, epoch)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            x, y = _batch(dataset, idx)
            loss, grads = loss_and_grads(graph, weights, x, y)
            if not math.isfinite(loss):
                raise DivergenceError(step, loss)
            clipped, norm = clip_by_global_norm(grads, config.grad_clip_norm)
            history.grad_norms.append(norm)
            history.clipped_norms.append(global_norm(clipped))
            weights, velocity = sgd_momentum_step(
                weights, clipped, velocity, lr, config.momentum, config.weight_decay
            )
            total += loss * len(idx)
            step += 1
        record = EpochRecord(epoch, lr, total / n)
        if eval_images:
            record.psnr = evaluate(graph, weights, eval_images, border_crop)[0]
        history.records.append(record)
        log.info("epoch %d lr %.3g loss %.6g psnr %s", epoch, lr, record.loss, record.psnr)
        if progress is not None:
            progress(record)
    history.snapshot_id = weights_digest(weights)
    return weights, history


def run_model(graph, weights, image):
    """Apply the network to one plane; the output is clamped to [0, 1]."""
    v = np.asarray(getattr(image, "values", image), dtype=np.float64)
    out = predict(graph, weights, Tensor(v[None, None]))
    return np.clip(out.data[0, 0], 0.0, 1.0)


def evaluate(graph, weights, eval_images, border_crop=0, peak=1.0, per_image=False):
    """Mean PSNR and SSIM of the model over ``(interpolated_input, hr)`` pairs.

    ``border_crop`` pixels are removed from every side before scoring.
    With ``per_image`` the per-image (psnr, ssim) list is returned as well.
    """
    eval_images = list(eval_images)
    if not eval_images:
        raise SpecError("evaluate needs at least one image")
    scores = []
    for lr_img, hr_img in eval_images:
        out = run_model(graph, weights, lr_img)
        hr = np.asarray(getattr(hr_img, "values", hr_img), dtype=np.float64)
        if border_crop:
            b = border_crop
            out_c, hr_c = out[b:-b, b:-b], hr[b:-b, b:-b]
        else:
            out_c, hr_c = out, hr
        scores.append((psnr(out_c, hr_c, peak=peak), ssim(out_c, hr_c, peak=peak)))
    mean_p = float(np.mean([s[0] for s in scores]))
    mean_s = float(np.mean([s[1] for s in scores]))
    if per_image:
        return mean_p, mean_s, scores
    return mean_p, mean_s


def config_dict(config):
    return asdict(config)
