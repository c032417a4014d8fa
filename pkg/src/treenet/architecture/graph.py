"""Compiled computation graphs plus static analysis on them.

A graph is a topologically ordered list of steps. Step 0 is always the
network input. Weight slots are referenced by exactly one conv step each;
a step's output may feed any number of consumers (this is how children share
their parent's features).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import SpecError

STEP_KINDS = ("input", "conv", "relu", "concat", "sum", "skip_add")

# conv roles that are not counted as nominal layers when reporting depth
_NON_LAYER_ROLES = frozenset({"fusion"})


@dataclass(frozen=True)
class WeightSlot:
    id: int
    out_channels: int
    in_channels: int
    kernel: int
    dilation: int = 1

    @property
    def shape(self):
        return (self.out_channels, self.in_channels, self.kernel, self.kernel)

    @property
    def size(self):
        return self.out_channels * self.in_channels * self.kernel * self.kernel


@dataclass(frozen=True)
class Step:
    id: int
    kind: str
    inputs: tuple = ()
    slot: int | None = None
    role: str = ""
    node: int | None = None


@dataclass
class NetworkGraph:
    name: str
    steps: list = field(default_factory=list)
    weight_slots: list = field(default_factory=list)
    input_channels: int = 1
    global_skip: bool = True
    scale_agnostic: bool = True
    tree_nodes: int = 0
    branches: list = field(default_factory=list)

    def validate(self):
        if not self.steps or self.steps[0].kind != "input":
            raise SpecError(f"{self.name}: step 0 must be the network input")
        used = {}
        for i, s in enumerate(self.steps):
            if s.id != i:
                raise SpecError(f"{self.name}: step ids must be consecutive, got {s.id} at position {i}")
            if s.kind not in STEP_KINDS:
                raise SpecError(f"{self.name}: unknown step kind {s.kind!r}")
            if any(j >= i or j < 0 for j in s.inputs):
                raise SpecError(f"{self.name}: step {i} reads a step that does not precede it")
            if s.kind == "conv":
                if s.slot is None or not 0 <= s.slot < len(self.weight_slots):
                    raise SpecError(f"{self.name}: conv step {i} has invalid weight slot {s.slot}")
                if s.slot in used:
                    raise SpecError(f"{self.name}: weight slot {s.slot} used by steps {used[s.slot]} and {i}")
                used[s.slot] = i
        if len(used) != len(self.weight_slots):
            raise SpecError(f"{self.name}: {len(self.weight_slots) - len(used)} weight slots are never used")
        return self

    @property
    def output_step(self):
        return self.steps[-1].id

    def channels(self):
        """Output channel count of every step."""
        ch = []
        for s in self.steps:
            if s.kind == "input":
                ch.append(self.input_channels)
            elif s.kind == "conv":
                slot = self.weight_slots[s.slot]
                if ch[s.inputs[0]] != slot.in_channels:
                    raise SpecError(
                        f"{self.name}: conv step {s.id} expects {slot.in_channels} channels, "
                        f"its input provides {ch[s.inputs[0]]}"
                    )
                ch.append(slot.out_channels)
            elif s.kind == "concat":
                ch.append(sum(ch[j] for j in s.inputs))
            else:
                widths = {ch[j] for j in s.inputs}
                if len(widths) != 1:
                    raise SpecError(f"{self.name}: step {s.id} ({s.kind}) mixes channel widths {sorted(widths)}")
                ch.append(widths.pop())
        return ch

    def consumers(self):
        out = {s.id: [] for s in self.steps}
        for s in self.steps:
            for j in s.inputs:
                out[j].append(s.id)
        return out

    @property
    def output_channels(self):
        return self.channels()[-1]


class GraphBuilder:
    """Append-only helper used by the architecture builders."""

    def __init__(self, name, input_channels=1):
        self.graph = NetworkGraph(name=name, input_channels=input_channels)
        self.graph.steps.append(Step(0, "input"))

    def _add(self, kind, inputs, slot=None, role="", node=None):
        step = Step(len(self.graph.steps), kind, tuple(inputs), slot, role, node)
        self.graph.steps.append(step)
        return step.id

    def conv(self, src, in_c, out_c, kernel, dilation=1, role="", node=None, activate=True):
        slot = WeightSlot(len(self.graph.weight_slots), out_c, in_c, kernel, dilation)
        self.graph.weight_slots.append(slot)
        sid = self._add("conv", [src], slot.id, role, node)
        return self._add("relu", [sid], role=role, node=node) if activate else sid

    def concat(self, srcs):
        return srcs[0] if len(srcs) == 1 else self._add("concat", srcs)

    def sum(self, srcs, node=None):
        return srcs[0] if len(srcs) == 1 else self._add("sum", srcs, node=node)

    def skip_add(self, src):
        return self._add("skip_add", [0, src])

    def finish(self, **meta):
        for key, value in meta.items():
            setattr(self.graph, key, value)
        self.graph.global_skip = any(s.kind == "skip_add" for s in self.graph.steps)
        return self.graph.validate()


def count_params(graph):
    """Total weight elements; biases do not exist and dilation is free."""
    return sum(slot.size for slot in graph.weight_slots)


def receptive_field(graph):
    """Largest input window seen by one output pixel over all paths."""
    reach = []
    for s in graph.steps:
        if s.kind == "input":
            reach.append(0)
            continue
        r = max(reach[j] for j in s.inputs)
        if s.kind == "conv":
            slot = graph.weight_slots[s.slot]
            r += slot.dilation * (slot.kernel - 1)
        reach.append(r)
    return 1 + reach[-1] if graph.steps else 1


def nominal_layers(graph):
    """Longest path counted in conv layers, ignoring 1x1 fusion convs."""
    depth = []
    for s in graph.steps:
        if s.kind == "input":
            depth.append(0)
            continue
        d = max(depth[j] for j in s.inputs)
        if s.kind == "conv" and s.role not in _NON_LAYER_ROLES:
            d += 1
        depth.append(d)
    return depth[-1] if graph.steps else 0
