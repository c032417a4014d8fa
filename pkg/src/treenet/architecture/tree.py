"""Declarative binary-tree topologies and their kernel-size rule.

Within a node, ``child_ids[0]`` is the *left* child and ``child_ids[1]`` the
*right* child. Kernel sizes grow along left edges only::

    left  = parent + step_n
    right = parent

so with ``step_n > 0`` every root-to-leaf kernel sequence is distinct.
A lone child is always stored in the left slot (it was added first).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..errors import SpecError

ORDINARY = "ordinary"
REVERSE = "reverse"
ENCODER_DECODER = "encoder_decoder"
ORIENTATIONS = (ORDINARY, REVERSE, ENCODER_DECODER)


@dataclass(frozen=True)
class NodeSpec:
    id: int
    layer_index: int
    kernel: int | None = None
    dilation: int = 1
    in_channels: int = 32
    out_channels: int = 32
    parent_ids: tuple = ()
    child_ids: tuple = ()

    def __post_init__(self):
        if self.layer_index < 1:
            raise SpecError(f"node {self.id}: layer_index must be >= 1, got {self.layer_index}")
        if self.kernel is not None and (self.kernel < 1 or self.kernel % 2 == 0):
            raise SpecError(f"node {self.id}: kernel must be odd and positive, got {self.kernel}")
        if self.dilation < 1:
            raise SpecError(f"node {self.id}: dilation must be >= 1, got {self.dilation}")
        if len(self.parent_ids) > 2:
            raise SpecError(f"node {self.id}: at most 2 parents allowed, got {len(self.parent_ids)}")


@dataclass(frozen=True)
class TreeSpec:
    nodes: tuple
    depth: int
    step_n: int = 2
    base_kernel: int = 3
    tree_feature_maps: int = 32
    tail_feature_maps: int = 64
    orientation: str = ORDINARY
    input_channels: int = 1
    name: str = ""
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.orientation not in ORIENTATIONS:
            raise SpecError(f"orientation must be one of {ORIENTATIONS}, got {self.orientation!r}")
        if self.step_n < 0 or self.step_n % 2:
            raise SpecError(f"step_n must be a non-negative even integer, got {self.step_n}")
        if self.base_kernel < 1 or self.base_kernel % 2 == 0:
            raise SpecError(f"base_kernel must be odd, got {self.base_kernel}")
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "_by_id", {n.id: n for n in self.nodes})
        if len(self._by_id) != len(self.nodes):
            raise SpecError("duplicate node ids in tree spec")
        self._check_links()

    def _check_links(self):
        for n in self.nodes:
            for c in n.child_ids:
                if c not in self._by_id or n.id not in self._by_id[c].parent_ids:
                    raise SpecError(f"node {n.id} lists child {c} which does not list it as parent")
            for p in n.parent_ids:
                if p not in self._by_id or n.id not in self._by_id[p].child_ids:
                    raise SpecError(f"node {n.id} lists parent {p} which does not list it as child")
            if self.orientation == REVERSE:
                if len(n.child_ids) > 1:
                    raise SpecError(f"reverse-tree node {n.id} has {len(n.child_ids)} children, expected <= 1")
            else:
                if len(n.parent_ids) > 1:
                    raise SpecError(f"tree node {n.id} has {len(n.parent_ids)} parents, expected <= 1")
                if len(n.child_ids) > 2:
                    raise SpecError(f"tree node {n.id} has {len(n.child_ids)} children, binary trees allow 2")

    def node(self, node_id):
        return self._by_id[node_id]

    @property
    def roots(self):
        return [n for n in self.nodes if not n.parent_ids]

    @property
    def root(self):
        (root,) = self.roots
        return root

    def layer(self, index):
        return [n for n in self.nodes if n.layer_index == index]

    def leaves(self):
        """Leaves of an ordinary tree in branch order.

        Depth-first, visiting the kernel-preserving (right) child before the
        kernel-growing (left) one, so branch 1 is the all-``base_kernel`` path.
        """
        if self.orientation == REVERSE:
            raise SpecError("leaves() is defined on ordinary trees; use sources() for reverse trees")
        out = []

        def visit(n):
            if not n.child_ids:
                out.append(n)
                return
            for c in reversed(n.child_ids):
                visit(self.node(c))

        visit(self.root)
        return out

    def sources(self):
        """Nodes with no parents, ordered by id."""
        return sorted(self.roots, key=lambda n: n.id)

    @property
    def leaf_count(self):
        if self.orientation == REVERSE:
            return len(self.sources())
        return len(self.leaves())

    def paths(self):
        """Root-to-leaf node sequences in branch order."""
        result = []
        for leaf in self.leaves():
            path = [leaf]
            while path[-1].parent_ids:
                path.append(self.node(path[-1].parent_ids[0]))
            result.append(path[::-1])
        return result

    def with_nodes(self, nodes, **changes):
        return replace(self, nodes=tuple(nodes), **changes)


def _topology(parent_of, depth_of, input_channels, maps):
    """NodeSpecs (kernel unset) from a parent map; children listed in insertion order."""
    children = {i: [] for i in parent_of}
    for i in sorted(parent_of):
        if parent_of[i] is not None:
            children[parent_of[i]].append(i)
    nodes = []
    for i in sorted(parent_of):
        p = parent_of[i]
        nodes.append(
            NodeSpec(
                id=i,
                layer_index=depth_of[i],
                in_channels=input_channels if p is None else maps,
                out_channels=maps,
                parent_ids=() if p is None else (p,),
                child_ids=tuple(children[i]),
            )
        )
    return nodes


def assign_kernel_sizes(spec):
    """Fill in every node's kernel from the root's ``base_kernel`` downwards."""
    if spec.orientation == REVERSE:
        raise SpecError("assign_kernel_sizes works on ordinary trees; build the reverse tree from one")
    kernels = {}
    for n in spec.nodes:
        if len(n.child_ids) > 2:
            raise SpecError(f"node {n.id} has {len(n.child_ids)} children; at most 2 allowed")
    stack = [(spec.root.id, spec.base_kernel)]
    while stack:
        nid, k = stack.pop()
        kernels[nid] = k
        node = spec.node(nid)
        for slot, c in enumerate(node.child_ids):
            stack.append((c, k + spec.step_n if slot == 0 else k))
    return spec.with_nodes([replace(n, kernel=kernels[n.id]) for n in spec.nodes])


def full_tree(depth=3, step_n=2, base_kernel=3, feature_maps=32, tail_feature_maps=64,
              input_channels=1, name=""):
    """Complete binary tree with ``2**(depth-1)`` leaves, kernels assigned."""
    if depth < 1:
        raise SpecError(f"depth must be >= 1, got {depth}")
    return grown_tree(2 ** depth - 1, step_n, base_kernel, feature_maps, tail_feature_maps,
                      input_channels, name)


def grown_tree(n_nodes, step_n=2, base_kernel=3, feature_maps=32, tail_feature_maps=64,
               input_channels=1, name=""):
    """Binary tree filled breadth-first, left to right, up to ``n_nodes`` nodes.

    Node ``i`` (0-based, heap order) hangs off node ``(i - 1) // 2``; odd ids take
    the left slot. This is the canonical fill order used by the node-count sweep.
    """
    if n_nodes < 1:
        raise SpecError(f"a tree needs at least one node, got {n_nodes}")
    parent_of = {0: None}
    depth_of = {0: 1}
    for i in range(1, n_nodes):
        parent_of[i] = (i - 1) // 2
        depth_of[i] = depth_of[parent_of[i]] + 1
    topo = TreeSpec(
        nodes=_topology(parent_of, depth_of, input_channels, feature_maps),
        depth=max(depth_of.values()),
        step_n=step_n,
        base_kernel=base_kernel,
        tree_feature_maps=feature_maps,
        tail_feature_maps=tail_feature_maps,
        input_channels=input_channels,
        name=name,
    )
    return assign_kernel_sizes(topo)


def dilate(spec):
    """Swap each k x k node for a 3 x 3 node of dilation (k - 1) / 2.

    Receptive field is unchanged; parameter count drops. 1 x 1 nodes are kept.
    """
    nodes = []
    for n in spec.nodes:
        if n.kernel is None:
            raise SpecError("assign kernels before dilating")
        if n.kernel == 1:
            nodes.append(n)
            continue
        reach = n.dilation * (n.kernel - 1)
        if reach % 2:
            raise SpecError(f"node {n.id}: reach {reach} cannot be matched by a 3x3 dilated kernel")
        nodes.append(replace(n, kernel=3, dilation=reach // 2))
    return spec.with_nodes(nodes)


def reverse_of(spec, name=""):
    """Rotate an ordinary tree by 180 degrees.

    Leaves become sources (in branch order), each internal node becomes a
    node that sums its former children; kernels travel with their nodes.
    """
    if spec.orientation != ORDINARY:
        raise SpecError("reverse_of expects an ordinary tree")
    order = {leaf.id: i for i, leaf in enumerate(spec.leaves())}
    nodes = []
    for n in spec.nodes:
        # keep mirrored parents in branch order so sums are left-to-right deterministic
        parents = tuple(sorted(n.child_ids, key=lambda c: _first_leaf_rank(spec, c, order)))
        nodes.append(
            replace(
                n,
                layer_index=spec.depth + 1 - n.layer_index,
                parent_ids=parents,
                child_ids=n.parent_ids,
            )
        )
    return TreeSpec(
        nodes=nodes,
        depth=spec.depth,
        step_n=spec.step_n,
        base_kernel=spec.base_kernel,
        tree_feature_maps=spec.tree_feature_maps,
        tail_feature_maps=spec.tail_feature_maps,
        orientation=REVERSE,
        input_channels=spec.input_channels,
        name=name or spec.name,
    )


def _first_leaf_rank(spec, node_id, order):
    node = spec.node(node_id)
    while node.child_ids:
        node = spec.node(node.child_ids[-1])
    return order[node.id]


def reverse_chain(depth, feature_maps=32, kernel=3):
    """Width-1 reverse tree: a plain chain of ``depth`` nodes."""
    nodes = []
    for i in range(depth):
        nodes.append(
            NodeSpec(
                id=i,
                layer_index=i + 1,
                kernel=kernel,
                out_channels=feature_maps,
                in_channels=feature_maps,
                parent_ids=(i - 1,) if i else (),
                child_ids=(i + 1,) if i < depth - 1 else (),
            )
        )
    return TreeSpec(nodes=nodes, depth=depth, step_n=0, base_kernel=kernel,
                    tree_feature_maps=feature_maps, orientation=REVERSE)


def encoder_decoder_of(spec, name=""):
    if spec.orientation != ORDINARY:
        raise SpecError("encoder_decoder_of expects an ordinary tree as encoder")
    return replace(spec, orientation=ENCODER_DECODER, name=name or spec.name)
