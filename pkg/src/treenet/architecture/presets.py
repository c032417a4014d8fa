"""Named models of the experiments, plus custom spec files.

=========  =====================================================  ==========
name       layout                                                 params
=========  =====================================================  ==========
vdsr5      5 x 3x3 conv, 64 maps                                  111744
inception  3x3, 2 inception blocks, 3x3, 3x3                      193664
ntn_32     7-node tree (32 maps), 1x1 fusion, 3x3, 3x3            191328
ntn_32_d   ntn_32 with 5x5/7x7 swapped for dilated 3x3            101216
ntn_16     7-node tree (16 maps)                                  78032
ntn_16_d   ntn_16, dilated                                        55504
rtn        stem, reverse 7-node tree, 1x1, 3x3, 3x3               194400
edtn       7-node encoder, 3-node decoder (3x3), 3x3              173632
=========  =====================================================  ==========
"""

from __future__ import annotations

import json
import os

from ..errors import SpecError
from . import builders
from .document import graph_from_document
from .tree import dilate, encoder_decoder_of, full_tree, grown_tree, reverse_of

PRESETS = ("vdsr5", "inception", "ntn_32", "ntn_32_d", "ntn_16", "ntn_16_d", "rtn", "edtn")


def preset_spec(name):
    """Tree spec behind a tree-based preset."""
    if name in ("ntn_32", "ntn_32_d", "ntn_16", "ntn_16_d"):
        maps = 32 if "32" in name else 16
        spec = full_tree(3, feature_maps=maps, name=name)
        return dilate(spec) if name.endswith("_d") else spec
    if name == "rtn":
        return reverse_of(full_tree(3), name="rtn")
    if name == "edtn":
        return encoder_decoder_of(full_tree(3), name="edtn")
    raise SpecError(f"{name!r} is not a tree-based preset")


def build_preset(name, input_channels=1):
    if name == "vdsr5":
        return builders.build_chain(5, 64, input_channels, name="vdsr5")
    if name == "inception":
        return builders.build_inception(input_channels=input_channels)
    if name not in PRESETS:
        raise SpecError(f"unknown architecture {name!r}; choose from {', '.join(PRESETS)} or a spec file")
    spec = preset_spec(name)
    if name == "rtn":
        return builders.build_rtn(spec, input_channels)
    if name == "edtn":
        return builders.build_edtn(spec, input_channels)
    return builders.build_ntn(spec, input_channels)


def spec_from_document(doc):
    """Build a graph from a small JSON tree description.

    Keys: ``kind`` (ntn | rtn | edtn | position | chain | branch), ``nodes`` or
    ``depth``, ``step_n``, ``base_kernel``, ``tree_feature_maps``,
    ``tail_feature_maps``, ``dilated``, ``position``, ``branch_index``,
    ``name``.
    """
    kind = doc.get("kind", "ntn")
    name = doc.get("name", kind)
    if kind == "chain":
        return builders.build_chain(doc.get("depth", 5), doc.get("feature_maps", 64), name=name)
    kw = dict(
        step_n=doc.get("step_n", 2),
        base_kernel=doc.get("base_kernel", 3),
        feature_maps=doc.get("tree_feature_maps", 32),
        tail_feature_maps=doc.get("tail_feature_maps", 64),
        name=name,
    )
    if "nodes" in doc:
        spec = grown_tree(doc["nodes"], **kw)
    else:
        spec = full_tree(doc.get("depth", 3), **kw)
    if doc.get("dilated"):
        spec = dilate(spec)
    if kind == "ntn":
        return builders.build_ntn(spec)
    if kind == "rtn":
        return builders.build_rtn(reverse_of(spec))
    if kind == "edtn":
        return builders.build_edtn(encoder_decoder_of(spec))
    if kind == "position":
        return builders.build_tree_at_position(doc.get("position", "middle"), spec)
    if kind == "branch":
        return builders.build_branch_network(spec, doc.get("branch_index", 1))
    raise SpecError(f"unknown spec kind {kind!r}")


def load_architecture(name_or_path):
    """Preset name, architecture document or tree-spec JSON file -> graph."""
    if name_or_path in PRESETS:
        return build_preset(name_or_path)
    if not os.path.exists(name_or_path):
        raise SpecError(f"unknown architecture {name_or_path!r}; choose from {', '.join(PRESETS)} or a spec file")
    with open(name_or_path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError(f"{name_or_path}: not valid JSON ({exc})") from exc
    if "steps" in doc:
        return graph_from_document(doc)
    return spec_from_document(doc)


def node_sweep_specs(min_nodes=3, max_nodes=15, feature_maps=32):
    """Canonical node-count family: breadth-first grown trees of 3..15 nodes."""
    return [grown_tree(n, feature_maps=feature_maps, name=f"ntn_nodes{n}") for n in range(min_nodes, max_nodes + 1)]
