"""Tree specs, graph compilation and static analysis."""

from .builders import (
    POSITIONS,
    BranchDescriptor,
    build_branch_network,
    build_chain,
    build_edtn,
    build_inception,
    build_ntn,
    build_rtn,
    build_tree_at_position,
    enumerate_branches,
)
from .document import describe, dumps, graph_from_document, loads
from .execute import backward, forward, init_weights, predict, zero_output_weights
from .graph import GraphBuilder, NetworkGraph, Step, WeightSlot, count_params, nominal_layers, receptive_field
from .presets import PRESETS, build_preset, load_architecture, node_sweep_specs, preset_spec
from .tree import (
    ENCODER_DECODER,
    ORDINARY,
    REVERSE,
    NodeSpec,
    TreeSpec,
    assign_kernel_sizes,
    dilate,
    encoder_decoder_of,
    full_tree,
    grown_tree,
    reverse_chain,
    reverse_of,
)
