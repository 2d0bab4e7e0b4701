"""Finite-difference gradient oracle for the classifier network.

The loss here is re-implemented from scratch (windows -> conv -> norm ->
ReLU -> maxpool -> dense -> softmax cross-entropy + weight decay) so the
check is independent of the library's own forward pass.

The probe point is constructed, not generic: a centred finite difference
with a fixed step of 1e-4 is only meaningful where the loss is smooth over
the step.  ReLU kinks and maxpool ties are genuine non-differentiable
points, so the probe weights are scaled to keep every activation and every
pool gap at least an order of magnitude away from them (margins asserted
below).  Batch labels are identical so per-component gradients are
same-sign sums, which keeps truncation error small relative to each
component.
"""
from __future__ import annotations

import numpy as np

from ssvepnav import scu
from ssvepnav.signal import EegEpoch, StimulusClass

FD_STEP = 1e-4
PROBE_SEED = 144  # selected for kink margins > 10 (see build_probe/margins)


def build_probe(seed: int = PROBE_SEED):
    """Well-conditioned model state and batch for the derivative check."""
    rng = np.random.default_rng(seed)
    model = scu.init_model(scu.ScuHyperparams(rng_seed=seed))
    hp = model.hyperparams
    model.conv_weights = 3.0 * rng.standard_normal(model.conv_weights.shape)
    model.conv_bias = 0.5 * rng.standard_normal(hp.n_filters)
    model.bn_gamma = 0.7 * (1.0 + 0.1 * rng.standard_normal(hp.n_filters))
    # positive offset keeps essentially every ReLU active: no dead pooled
    # units, and the nearest kink sits in the far tail of the activation
    # distribution
    model.bn_beta = 60.0 * (1.0 + 0.05 * rng.standard_normal(hp.n_filters))
    model.bn_running_mean = 0.1 * rng.standard_normal(hp.n_filters)
    model.bn_running_var = np.ones(hp.n_filters)
    model.dense_weights = 2e-4 * rng.standard_normal(model.dense_weights.shape)
    model.dense_bias = 0.1 * rng.standard_normal(3)
    model.trained = True
    xs = rng.standard_normal((4, 9, 1500))
    batch = [(EegEpoch(x), StimulusClass.F10) for x in xs]
    return model, xs, batch


def margins(model, xs, step: float = FD_STEP):
    """Distance of every activation/pool gap to its nearest kink, in units
    of the worst-case shift a single +-step parameter perturbation causes.

    A margin > 1 proves no perturbed evaluation crosses a kink; we demand
    much more than that before trusting the finite differences.
    """
    hp = model.hyperparams
    _, cache = scu._forward(model, xs, training=False)
    bn, xhat = cache["bn"], cache["xhat"]
    gam = np.abs(model.bn_gamma)
    if bn.shape[-1] == hp.n_filters:
        gfield = gam[None, None, :]
    else:
        gfield = gam[None, :, None]
    x_max = np.abs(xs).max()
    # largest per-unit shift over shift (beta), scale (gamma), bias and
    # single conv weight perturbations
    sens = step * np.maximum.reduce([
        np.ones_like(bn),
        np.abs(xhat),
        np.broadcast_to(gfield, bn.shape),
        np.broadcast_to(gfield, bn.shape) * x_max,
    ])
    relu_margin = float((np.abs(bn) / sens).min())
    pool_in = cache["pool_in"]
    active = pool_in.max(axis=3) > 0
    gaps = np.abs(pool_in[..., 0] - pool_in[..., 1])[active]
    # only conv-weight perturbations move the two pool candidates apart
    pool_margin = float(gaps.min() / (2 * step * gam.max() * x_max))
    dead_columns = int((cache["flat"].max(axis=0) == 0).sum())
    return relu_margin, pool_margin, dead_columns


def make_loss_fn(model, xs, labels):
    """Independent loss evaluation with the sliding windows precomputed
    (inputs never change during the sweep, only parameters)."""
    hp = model.hyperparams
    windows = scu._conv_windows(xs, hp.conv_kernel, hp.conv_stride)
    n_batch = windows.shape[0]
    usable = hp.pool_out_len * hp.pool_size

    def loss_fn(m):
        w_mat = m.conv_weights.reshape(hp.n_filters, -1)
        conv = windows @ w_mat.T + m.conv_bias
        xhat = (conv - m.bn_running_mean) / np.sqrt(m.bn_running_var + 1e-5)
        bn = m.bn_gamma * xhat + m.bn_beta
        act = np.maximum(bn, 0.0).transpose(0, 2, 1)
        pooled = act[:, :, :usable].reshape(
            n_batch, hp.n_filters, hp.pool_out_len, hp.pool_size).max(axis=3)
        flat = pooled.reshape(n_batch, -1)
        logits = flat @ m.dense_weights.T + m.dense_bias
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        ce = -logp[np.arange(n_batch), labels].mean()
        l2 = hp.l2_scale * ((m.conv_weights ** 2).sum()
                            + (m.dense_weights ** 2).sum())
        return ce + l2

    return loss_fn


def fd_sweep(model, loss_fn, grads, step: float = FD_STEP):
    """Centred finite difference for every parameter component.

    Returns (worst relative error, its location, component count).
    """
    worst, worst_at, total = 0.0, None, 0
    for name in scu.PARAM_NAMES:
        analytic = grads[name]
        tensor = getattr(model, name)
        it = np.nditer(tensor, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = tensor[idx]
            tensor[idx] = orig + step
            loss_plus = loss_fn(model)
            tensor[idx] = orig - step
            loss_minus = loss_fn(model)
            tensor[idx] = orig
            numeric = (loss_plus - loss_minus) / (2 * step)
            rel = abs(numeric - analytic[idx]) / max(
                abs(numeric), abs(analytic[idx]), 1e-8)
            total += 1
            if rel > worst:
                worst, worst_at = rel, (name, idx)
    return worst, worst_at, total


def run_gradient_check(seed: int = PROBE_SEED):
    """Full pipeline: build probe, assert conditioning, sweep.

    Returns (worst_rel_error, worst_location, n_components, elapsed_s).
    """
    import time

    model, xs, batch = build_probe(seed)
    relu_m, pool_m, dead = margins(model, xs)
    assert relu_m > 5.0 and pool_m > 5.0 and dead == 0, (
        "probe point not well-conditioned: relu %.2f pool %.2f dead %d"
        % (relu_m, pool_m, dead))
    labels = np.array([cls.class_index for _, cls in batch])
    loss_fn = make_loss_fn(model, xs, labels)
    loss, grads = scu.loss_and_gradients(model, batch, training=False)
    assert abs(loss - loss_fn(model)) <= 1e-9 * max(1.0, abs(loss))
    start = time.time()
    worst, worst_at, total = fd_sweep(model, loss_fn, grads)
    return worst, worst_at, total, time.time() - start
