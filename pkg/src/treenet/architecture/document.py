"""Architecture documents: a JSON description of a compiled graph.

Key order is fixed by construction, so serialising the same graph always
yields the same bytes. ``graph_from_document(describe(g))`` rebuilds ``g``.
"""

from __future__ import annotations

import json

from ..errors import SpecError
from .builders import BranchDescriptor
from .graph import NetworkGraph, Step, WeightSlot, count_params, nominal_layers, receptive_field


def describe(graph):
    return {
        "name": graph.name,
        "input_channels": graph.input_channels,
        "global_skip": graph.global_skip,
        "scale_agnostic": graph.scale_agnostic,
        "nominal_layers": nominal_layers(graph),
        "tree_nodes": graph.tree_nodes,
        "param_count": count_params(graph),
        "receptive_field": receptive_field(graph),
        "weight_slots": [
            {"id": s.id, "shape": list(s.shape), "dilation": s.dilation} for s in graph.weight_slots
        ],
        "steps": [
            {"id": s.id, "kind": s.kind, "inputs": list(s.inputs), "slot": s.slot, "role": s.role, "node": s.node}
            for s in graph.steps
        ],
        "branches": [
            {
                "branch_index": b.branch_index,
                "kernel_path": [list(kd) for kd in b.kernel_path],
                "param_count": b.param_count,
                "receptive_field": b.receptive_field,
            }
            for b in graph.branches
        ],
    }


def dumps(doc):
    return json.dumps(doc, indent=2) + "\n"


def graph_from_document(doc):
    try:
        slots = []
        for s in doc["weight_slots"]:
            out_c, in_c, k, k2 = s["shape"]
            if k != k2:
                raise SpecError(f"weight slot {s['id']} is not square: {s['shape']}")
            slots.append(WeightSlot(s["id"], out_c, in_c, k, s.get("dilation", 1)))
        steps = [
            Step(s["id"], s["kind"], tuple(s["inputs"]), s["slot"], s.get("role", ""), s.get("node"))
            for s in doc["steps"]
        ]
        branches = [
            BranchDescriptor(
                b["branch_index"], tuple(tuple(kd) for kd in b["kernel_path"]),
                b["param_count"], b["receptive_field"],
            )
            for b in doc.get("branches", [])
        ]
        graph = NetworkGraph(
            name=doc["name"],
            steps=steps,
            weight_slots=slots,
            input_channels=doc.get("input_channels", 1),
            global_skip=doc.get("global_skip", True),
            scale_agnostic=doc.get("scale_agnostic", True),
            tree_nodes=doc.get("tree_nodes", 0),
            branches=branches,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(f"malformed architecture document: {exc!r}") from exc
    graph.validate()
    graph.channels()
    return graph


def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"architecture document is not valid JSON: {exc}") from exc
    return graph_from_document(doc)
