"""Central finite-difference checks for every differentiable op.

Each check builds a random scalar ``L = sum(G * op(inputs))`` with a random
upstream ``G`` and compares the analytic gradient of ``L`` against
``(L(x + eps) - L(x - eps)) / (2 eps)`` entry by entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_core as tc

EPS = 1e-5
REL_TOL = 1e-4
# entries whose magnitude is below this are compared absolutely
ABS_FLOOR = 1e-6
RELU_KINK = 1e-3
KERNELS = (1, 3, 5, 7)
DILATIONS = (1, 2, 3)


@dataclass
class CheckResult:
    op: str
    cases: int
    max_rel_error: float
    passed: bool


def relative_error(analytic, numeric, floor=ABS_FLOOR):
    a, n = np.asarray(analytic), np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def numeric_grad(f, x, eps=EPS, mask=None):
    """Central differences of scalar ``f`` w.r.t. every entry of array ``x``."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        if mask is not None and not mask.reshape(-1)[i]:
            continue
        old = flat[i]
        flat[i] = old + eps
        hi = f()
        flat[i] = old - eps
        lo = f()
        flat[i] = old
        gflat[i] = (hi - lo) / (2 * eps)
    return g


def check_conv2d(rng, kernel, dilation, backward=None, shape=(2, 2, 6, 6), out_channels=3):
    backward = backward or tc.conv2d_backward
    x = rng.uniform(-1, 1, shape)
    w = rng.uniform(-1, 1, (out_channels, shape[1], kernel, kernel))
    up = rng.uniform(-1, 1, (shape[0], out_channels) + shape[2:])

    def loss():
        return float(np.sum(up * tc.conv2d(tc.Tensor(x), tc.ConvWeights(w, dilation)).data))

    gx, gw = backward(tc.Tensor(x), tc.ConvWeights(w, dilation), tc.Tensor(up))
    return max(
        relative_error(gx.data, numeric_grad(loss, x)),
        relative_error(gw.data, numeric_grad(loss, w)),
    )


def check_relu(rng, backward=None, shape=(2, 3, 5, 5)):
    backward = backward or tc.relu_backward
    x = rng.uniform(-1, 1, shape)
    up = rng.uniform(-1, 1, shape)
    mask = np.abs(x) > RELU_KINK

    def loss():
        return float(np.sum(up * tc.relu(tc.Tensor(x)).data))

    g = backward(tc.Tensor(x), tc.Tensor(up)).data
    return relative_error(g[mask], numeric_grad(loss, x, mask=mask)[mask])


def check_concat(rng, backward=None):
    backward = backward or tc.concat_channels_backward
    parts = [rng.uniform(-1, 1, (2, c, 4, 4)) for c in (1, 3, 2)]
    up = rng.uniform(-1, 1, (2, 6, 4, 4))

    def loss():
        return float(np.sum(up * tc.concat_channels([tc.Tensor(p) for p in parts]).data))

    grads = backward([p.shape[1] for p in parts], tc.Tensor(up))
    return max(relative_error(g.data, numeric_grad(loss, p)) for g, p in zip(grads, parts))


def check_add(rng, backward=None):
    backward = backward or tc.add_backward
    a, b = rng.uniform(-1, 1, (2, 3, 4, 4)), rng.uniform(-1, 1, (2, 3, 4, 4))
    up = rng.uniform(-1, 1, a.shape)

    def loss():
        return float(np.sum(up * tc.add(tc.Tensor(a), tc.Tensor(b)).data))

    ga, gb = backward(tc.Tensor(up))
    return max(relative_error(ga.data, numeric_grad(loss, a)), relative_error(gb.data, numeric_grad(loss, b)))


def check_mse(rng, backward=None):
    backward = backward or tc.mse_loss_backward
    p, t = rng.uniform(-1, 1, (2, 1, 5, 5)), rng.uniform(-1, 1, (2, 1, 5, 5))

    def loss():
        return tc.mse_loss(tc.Tensor(p), tc.Tensor(t))

    return relative_error(backward(tc.Tensor(p), tc.Tensor(t)).data, numeric_grad(loss, p))


def run_gradcheck(instances=5, seed=0, overrides=None, tol=REL_TOL):
    """Run every suite; ``overrides`` maps an op name to a replacement backward.

    Returns one CheckResult per op: conv2d (every kernel x dilation pair),
    relu, concat_channels, add, mse_loss.
    """
    overrides = overrides or {}
    rng = np.random.default_rng(seed)
    results = []

    errs = [
        check_conv2d(rng, k, d, overrides.get("conv2d"))
        for k in KERNELS for d in DILATIONS for _ in range(instances)
    ]
    results.append(CheckResult("conv2d", len(errs), max(errs), max(errs) < tol))
    for name, fn in (("relu", check_relu), ("concat_channels", check_concat),
                     ("add", check_add), ("mse_loss", check_mse)):
        errs = [fn(rng, overrides.get(name)) for _ in range(instances)]
        results.append(CheckResult(name, len(errs), max(errs), max(errs) < tol))
    return results


def format_report(results):
    lines = [f"{'op':<16} {'cases':>5} {'max_rel_error':>14}  status"]
    for r in results:
        lines.append(f"{r.op:<16} {r.cases:>5} {r.max_rel_error:>14.3e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
