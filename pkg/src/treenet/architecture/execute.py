"""Run a compiled graph forward and backward with explicit weights."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..tensor_core import (
    ConvWeights,
    Tensor,
    add,
    add_backward,
    concat_channels,
    concat_channels_backward,
    conv2d,
    conv2d_backward,
    he_init,
    relu,
    relu_backward,
)


def init_weights(graph, seed):
    """He-initialise every slot; slot ``i`` draws from the stream ``(seed, i)``."""
    return [he_init(s.shape, (int(seed), s.id), dilation=s.dilation) for s in graph.weight_slots]


def zero_output_weights(graph, weights):
    """Copy of ``weights`` with the output conv zeroed: the network becomes the identity."""
    out = [ConvWeights(w.data.copy(), w.dilation) for w in weights]
    for s in graph.steps:
        if s.kind == "conv" and s.role == "output":
            out[s.slot] = ConvWeights(np.zeros_like(out[s.slot].data), out[s.slot].dilation)
    return out


def _check_weights(graph, weights):
    if len(weights) != len(graph.weight_slots):
        raise ShapeError(f"{graph.name}: got {len(weights)} weight arrays for {len(graph.weight_slots)} slots")
    for slot, w in zip(graph.weight_slots, weights):
        if w.shape != slot.shape or w.dilation != slot.dilation:
            raise ShapeError(
                f"{graph.name}: slot {slot.id} expects {slot.shape} dilation {slot.dilation}, "
                f"got {w.shape} dilation {w.dilation}"
            )


def forward(graph, weights, x, keep=True):
    """Evaluate the graph on ``x``; returns ``(output, activations)``.

    ``activations`` holds every step's output when ``keep`` is true (needed
    for ``backward``), otherwise it is None.
    """
    _check_weights(graph, weights)
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.channels != graph.input_channels:
        raise ShapeError(f"{graph.name}: input has {x.channels} channels, graph expects {graph.input_channels}")
    acts = [x]
    consumers = None if keep else graph.consumers()
    remaining = None if keep else {k: len(v) for k, v in consumers.items()}
    for s in graph.steps[1:]:
        ins = [acts[j] for j in s.inputs]
        if s.kind == "conv":
            y = conv2d(ins[0], weights[s.slot])
        elif s.kind == "relu":
            y = relu(ins[0])
        elif s.kind == "concat":
            y = concat_channels(ins)
        elif s.kind in ("sum", "skip_add"):
            y = ins[0]
            for other in ins[1:]:
                y = add(y, other)
        else:  # pragma: no cover - validate() rejects other kinds
            raise ShapeError(f"unknown step kind {s.kind}")
        acts.append(y)
        if not keep:
            for j in s.inputs:
                remaining[j] -= 1
                if remaining[j] == 0 and j != 0:
                    acts[j] = None
    return acts[-1], (acts if keep else None)


def backward(graph, weights, acts, upstream_grad):
    """Reverse sweep; returns one ConvWeights gradient per slot."""
    grads = [None] * len(graph.steps)
    grads[-1] = upstream_grad.data if isinstance(upstream_grad, Tensor) else np.asarray(upstream_grad)
    wgrads = [None] * len(graph.weight_slots)
    for s in reversed(graph.steps[1:]):
        g = grads[s.id]
        if g is None:
            continue
        if s.kind == "conv":
            src = s.inputs[0]
            need = src != 0
            gx, gw = conv2d_backward(acts[src], weights[s.slot], Tensor(g), need_input_grad=need)
            wgrads[s.slot] = gw
            parts = [(src, gx.data)] if need else []
        elif s.kind == "relu":
            parts = [(s.inputs[0], relu_backward(acts[s.inputs[0]], Tensor(g)).data)]
        elif s.kind == "concat":
            counts = [acts[j].channels for j in s.inputs]
            split = concat_channels_backward(counts, Tensor(g))
            parts = [(j, t.data) for j, t in zip(s.inputs, split)]
        else:
            # sum / skip_add: upstream fans out unchanged to every operand
            parts = []
            for j in s.inputs:
                ga, _ = add_backward(Tensor(g))
                parts.append((j, ga.data))
        for j, part in parts:
            grads[j] = part if grads[j] is None else grads[j] + part
        grads[s.id] = None
    for slot, wg in zip(graph.weight_slots, wgrads):
        if wg is None:
            wgrads[slot.id] = ConvWeights(np.zeros(slot.shape), slot.dilation)
    return wgrads


def predict(graph, weights, x):
    out, _ = forward(graph, weights, x, keep=False)
    return out
