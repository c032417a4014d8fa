"""Compile tree specs (and the chain/inception baselines) into graphs.

All builders end with the 1-channel output conv (no ReLU) followed by the
global skip ``output = input + residual``.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import SpecError
from .graph import GraphBuilder, count_params, receptive_field
from .tree import ENCODER_DECODER, ORDINARY, REVERSE, full_tree, reverse_of

TAIL_KERNEL = 3
POSITIONS = ("up", "middle", "bottom")


@dataclass(frozen=True)
class BranchDescriptor:
    branch_index: int
    kernel_path: tuple
    param_count: int
    receptive_field: int


def _require(spec, orientation, builder):
    if spec.orientation != orientation:
        raise SpecError(f"{builder} needs a {orientation!r} tree spec, got {spec.orientation!r}")


def _emit_tree(b, spec, src, in_channels):
    """Emit the shared-feature tree; returns leaf output step ids in branch order."""
    out = {}
    maps = spec.tree_feature_maps
    order = sorted(spec.nodes, key=lambda n: (n.layer_index, n.id))
    for n in order:
        if n.parent_ids:
            feed, c_in = out[n.parent_ids[0]], maps
        else:
            feed, c_in = src, in_channels
        # both children read out[parent]: the same producing step
        out[n.id] = b.conv(feed, c_in, maps, n.kernel, n.dilation, role="tree", node=n.id)
    return out, [out[leaf.id] for leaf in spec.leaves()]


def _fusion(b, leaf_steps, maps, tail_maps):
    cat = b.concat(leaf_steps)
    return b.conv(cat, maps * len(leaf_steps), tail_maps, 1, role="fusion")


def build_ntn(spec, input_channels=None):
    """Tree -> concat of leaves -> 1x1 fusion -> 3x3 -> 3x3 (to 1 channel) -> skip."""
    _require(spec, ORDINARY, "build_ntn")
    in_c = spec.input_channels if input_channels is None else input_channels
    tail = spec.tail_feature_maps
    b = GraphBuilder(spec.name or "ntn", in_c)
    _, leaves = _emit_tree(b, spec, 0, in_c)
    h = _fusion(b, leaves, spec.tree_feature_maps, tail)
    h = b.conv(h, tail, tail, TAIL_KERNEL, role="tail")
    h = b.conv(h, tail, in_c, TAIL_KERNEL, role="output", activate=False)
    b.skip_add(h)
    return b.finish(tree_nodes=len(spec.nodes), branches=enumerate_branches(spec, in_c))


def build_rtn(spec, input_channels=None):
    """Reverse tree: widest layer first, each node convolves the sum of its parents.

    A 3x3 stem lifts the image to ``tree_feature_maps`` channels so every source
    node sees the same features, then the sink is lifted to the tail width by a
    1x1 conv and finished with the NTN tail.
    """
    _require(spec, REVERSE, "build_rtn")
    in_c = spec.input_channels if input_channels is None else input_channels
    maps, tail = spec.tree_feature_maps, spec.tail_feature_maps
    b = GraphBuilder(spec.name or "rtn", in_c)
    stem = b.conv(0, in_c, maps, 3, role="stem")
    out = {}
    for n in sorted(spec.nodes, key=lambda n: (n.layer_index, n.id)):
        feed = b.sum([out[p] for p in n.parent_ids], node=n.id) if n.parent_ids else stem
        out[n.id] = b.conv(feed, maps, maps, n.kernel, n.dilation, role="tree", node=n.id)
    (sink,) = [n for n in spec.nodes if not n.child_ids]
    h = b.conv(out[sink.id], maps, tail, 1, role="fusion")
    h = b.conv(h, tail, tail, TAIL_KERNEL, role="tail")
    h = b.conv(h, tail, in_c, TAIL_KERNEL, role="output", activate=False)
    b.skip_add(h)
    return b.finish(tree_nodes=len(spec.nodes))


def build_edtn(spec, input_channels=None):
    """Ordinary-tree encoder followed by a mirrored reverse-tree decoder.

    One decoder node per internal encoder node; it convolves (3x3, maps->maps)
    the sum of the outputs for that node's children. Leaves feed the first
    decoder layer directly, the decoder sink feeds the 3x3 output conv.
    """
    _require(spec, ENCODER_DECODER, "build_edtn")
    in_c = spec.input_channels if input_channels is None else input_channels
    maps = spec.tree_feature_maps
    b = GraphBuilder(spec.name or "edtn", in_c)
    enc, _ = _emit_tree(b, spec, 0, in_c)
    dec = {}
    # deepest internal nodes first so each decoder node's inputs exist
    internal = [n for n in spec.nodes if n.child_ids]
    order = {leaf.id: i for i, leaf in enumerate(spec.leaves())}

    def rank(nid):
        node = spec.node(nid)
        while node.child_ids:
            node = spec.node(node.child_ids[-1])
        return order[node.id]

    for n in sorted(internal, key=lambda n: (-n.layer_index, rank(n.id))):
        kids = sorted(n.child_ids, key=rank)
        srcs = [dec[c] if c in dec else enc[c] for c in kids]
        h = b.sum(srcs)
        dec[n.id] = b.conv(h, maps, maps, 3, role="decoder", node=n.id)
    top = dec[spec.root.id] if spec.root.id in dec else enc[spec.root.id]
    h = b.conv(top, maps, in_c, TAIL_KERNEL, role="output", activate=False)
    b.skip_add(h)
    return b.finish(tree_nodes=len(spec.nodes) + len(internal))


def build_chain(depth, feature_maps=64, input_channels=1, name=None):
    """VDSR-style serial stack of 3x3 convs with a global skip."""
    if depth < 2:
        raise SpecError(f"a chain needs depth >= 2, got {depth}")
    b = GraphBuilder(name or f"chain{depth}_{feature_maps}", input_channels)
    h = b.conv(0, input_channels, feature_maps, 3, role="chain")
    for _ in range(depth - 2):
        h = b.conv(h, feature_maps, feature_maps, 3, role="chain")
    h = b.conv(h, feature_maps, input_channels, 3, role="output", activate=False)
    b.skip_add(h)
    return b.finish()


def build_inception(feature_maps=64, branch_maps=32, input_channels=1, blocks=2, name="inception"):
    """Five-layer baseline with two pooling-free Inception blocks.

    Each block runs parallel 1x1/3x3/5x5 convs on the same input, concatenates
    them and reduces back to ``feature_maps`` with a 1x1 conv.
    """
    b = GraphBuilder(name, input_channels)
    h = b.conv(0, input_channels, feature_maps, 3, role="chain")
    for _ in range(blocks):
        paths = [b.conv(h, feature_maps, branch_maps, k, role="inception") for k in (1, 3, 5)]
        h = b.conv(b.concat(paths), 3 * branch_maps, feature_maps, 1, role="fusion")
    h = b.conv(h, feature_maps, feature_maps, 3, role="chain")
    h = b.conv(h, feature_maps, input_channels, 3, role="output", activate=False)
    b.skip_add(h)
    return b.finish()


def build_tree_at_position(position, spec, total_layers=8, input_channels=None):
    """Place a depth-3 tree at the top, middle or bottom of an 8-layer network.

    Layer 8 is always the 1-channel output conv. The other layers are 3x3
    chain convs at ``tail_feature_maps``; the tree root reads directly from
    whatever precedes it and a 1x1 fusion conv follows the leaves.
    """
    if position not in POSITIONS:
        raise SpecError(f"position must be one of {POSITIONS}, got {position!r}")
    _require(spec, ORDINARY, "build_tree_at_position")
    if spec.depth != 3 or total_layers != 8:
        raise SpecError("tree-position networks use a depth-3 tree inside 8 layers")
    in_c = spec.input_channels if input_channels is None else input_channels
    maps, wide = spec.tree_feature_maps, spec.tail_feature_maps
    first_tree_layer = {"up": 1, "middle": 3, "bottom": 5}[position]
    b = GraphBuilder(f"{spec.name or 'ntn'}_{position}", in_c)
    h, width = 0, in_c
    layer = 1
    while layer < total_layers:
        if layer == first_tree_layer:
            _, leaves = _emit_tree(b, spec, h, width)
            h, width = _fusion(b, leaves, maps, wide), wide
            layer += spec.depth
        else:
            h, width = b.conv(h, width, wide, 3, role="chain"), wide
            layer += 1
    h = b.conv(h, width, in_c, TAIL_KERNEL, role="output", activate=False)
    b.skip_add(h)
    return b.finish(tree_nodes=len(spec.nodes))


def build_branch_network(spec, branch_index, input_channels=None):
    """One root-to-leaf path as a standalone serial network.

    The path convs are followed directly by 3x3 (maps -> tail) and 3x3
    (tail -> 1): branch networks have nothing to fuse.
    """
    _require(spec, ORDINARY, "build_branch_network")
    paths = spec.paths()
    if not 1 <= branch_index <= len(paths):
        raise SpecError(f"branch_index must be in 1..{len(paths)}, got {branch_index}")
    in_c = spec.input_channels if input_channels is None else input_channels
    maps, tail = spec.tree_feature_maps, spec.tail_feature_maps
    b = GraphBuilder(f"{spec.name or 'ntn'}_branch{branch_index}", in_c)
    h, width = 0, in_c
    for n in paths[branch_index - 1]:
        h, width = b.conv(h, width, maps, n.kernel, n.dilation, role="branch", node=n.id), maps
    h = b.conv(h, maps, tail, TAIL_KERNEL, role="tail")
    h = b.conv(h, tail, in_c, TAIL_KERNEL, role="output", activate=False)
    b.skip_add(h)
    return b.finish(tree_nodes=len(paths[branch_index - 1]))


def enumerate_branches(spec, input_channels=None):
    """One descriptor per leaf, in branch order."""
    _require(spec, ORDINARY, "enumerate_branches")
    out = []
    for i, path in enumerate(spec.paths(), start=1):
        g = build_branch_network(spec, i, input_channels)
        out.append(
            BranchDescriptor(
                branch_index=i,
                kernel_path=tuple((n.kernel, n.dilation) for n in path),
                param_count=count_params(g),
                receptive_field=receptive_field(g),
            )
        )
    return out


def default_reverse_spec(feature_maps=32):
    return reverse_of(full_tree(3, feature_maps=feature_maps), name="rtn")
