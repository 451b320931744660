"""The graph-ordered generative network.

One gated recurrent cell per generated variable, processed in the linearized
graph order. Each cell consumes fresh Gaussian noise, the mean transformed
output of its direct predecessors, and an attention vector over its remaining
ancestors; it emits a cell state (passed to generated successors), a raw
output that a two-layer head turns into encoded synthetic values, and a
common-width transformed output. Conditional-input variables have no cell:
their encoded value passes through a learned affine map to the common width,
which is how they feed both direct successors and attention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import Tensor, nn

from .dag import ROLE_CONDITIONAL, ROLE_GENERATED, GeneratorGraph
from .errors import InputError, ShapeMismatch
from .schema import EncoderSet


@dataclass(frozen=True)
class GeneratorDims:
    """Widths of the moving parts: noise, cell state, transformed output."""

    d_z: int = 32
    d_h: int = 64
    d_f: int = 48

    def __post_init__(self):
        if min(self.d_z, self.d_h, self.d_f) <= 0:
            raise InputError("all generator dimensions must be positive")


def attention(f_values, alpha: Tensor) -> Tensor:
    """Softmax-weighted sum of the transformed outputs of indirect ancestors.

    ``f_values`` is a sequence of (batch, d_f) tensors, one per attended
    ancestor, and ``alpha`` one learned scalar per ancestor. Returns the
    (batch, d_f) combination; callers handle the empty-ancestor case by
    substituting a zero vector.
    """
    if len(f_values) != alpha.shape[0]:
        raise ShapeMismatch(f"{len(f_values)} ancestor outputs but {alpha.shape[0]} weights")
    weights = torch.softmax(alpha, dim=0)
    stacked = torch.stack(tuple(f_values), dim=0)  # (k, batch, d_f)
    return torch.einsum("k,kbf->bf", weights, stacked)


def node_input(z: Tensor, f_mean: Tensor, a: Tensor) -> Tensor:
    """Concatenate noise, mean predecessor output, and attention vector."""
    return torch.cat([z, f_mean, a], dim=1)


class _GeneratedNode(nn.Module):
    """Cell, output head, input transformer, and attention weights for one
    generated variable."""

    def __init__(self, d_in: int, d_h: int, d_f: int, enc_width: int, n_attention: int, dtype):
        super().__init__()
        self.gates_w = nn.Parameter(torch.empty(4 * d_h, d_in, dtype=dtype))
        self.gates_b = nn.Parameter(torch.empty(4 * d_h, dtype=dtype))
        self.out1_w = nn.Parameter(torch.empty(d_h, d_h, dtype=dtype))
        self.out1_b = nn.Parameter(torch.empty(d_h, dtype=dtype))
        self.out2_w = nn.Parameter(torch.empty(enc_width, d_h, dtype=dtype))
        self.out2_b = nn.Parameter(torch.empty(enc_width, dtype=dtype))
        self.intf_w = nn.Parameter(torch.empty(d_f, enc_width, dtype=dtype))
        self.intf_b = nn.Parameter(torch.empty(d_f, dtype=dtype))
        if n_attention > 0:
            self.alpha = nn.Parameter(torch.empty(n_attention, dtype=dtype))
        else:
            self.alpha = None
        self.d_h = d_h

    def cell_step(self, c_in: Tensor, i_t: Tensor) -> tuple[Tensor, Tensor]:
        """Gated update: (C_in, i_t) -> (C_t, h_t)."""
        pre = torch.nn.functional.linear(i_t, self.gates_w, self.gates_b)
        gi, gf, go, gc = pre.chunk(4, dim=1)
        c_t = torch.sigmoid(gf) * c_in + torch.sigmoid(gi) * torch.tanh(gc)
        h_t = torch.sigmoid(go) * torch.tanh(c_t)
        return c_t, h_t

    def output_head(self, h_t: Tensor) -> Tensor:
        hidden = torch.relu(torch.nn.functional.linear(h_t, self.out1_w, self.out1_b))
        return torch.nn.functional.linear(hidden, self.out2_w, self.out2_b)

    def input_transform(self, v_synth: Tensor) -> Tensor:
        return torch.nn.functional.linear(v_synth, self.intf_w, self.intf_b)


class _ConditionalNode(nn.Module):
    """Affine map from one encoded conditional-input block to the common width."""

    def __init__(self, enc_width: int, d_f: int, dtype):
        super().__init__()
        self.w = nn.Parameter(torch.empty(d_f, enc_width, dtype=dtype))
        self.b = nn.Parameter(torch.empty(d_f, dtype=dtype))

    def forward(self, encoded: Tensor) -> Tensor:
        if encoded.shape[1] != self.w.shape[1]:
            raise ShapeMismatch(
                f"conditional input width {encoded.shape[1]} != expected {self.w.shape[1]}"
            )
        return torch.nn.functional.linear(encoded, self.w, self.b)


class DagGenerator(nn.Module):
    """Generator over a linearized graph.

    ``forward`` takes per-node noise and the encoded conditional-input
    columns, and returns the encoded synthetic blocks of all generated
    variables, concatenated in graph order.
    """

    def __init__(
        self,
        graph: GeneratorGraph,
        encoders: EncoderSet,
        dims: GeneratorDims = GeneratorDims(),
        dtype=torch.float32,
    ):
        super().__init__()
        self.graph = graph
        self.dims = dims
        self.enc_widths = {n.name: encoders.width(n.name) for n in graph.nodes}
        # Activation structure of each generated block: which slices get a
        # softmax and whether slot 0 is a tanh scalar.
        self._block_plan = {}
        for node in graph.generated:
            enc = encoders[node.name]
            if hasattr(enc, "categories"):
                self._block_plan[node.name] = ("categorical", enc.width)
            else:
                self._block_plan[node.name] = ("continuous", enc.width)

        d_in = dims.d_z + 2 * dims.d_f
        nodes = {}
        for node in graph.nodes:
            if node.role == ROLE_GENERATED:
                nodes[node.name] = _GeneratedNode(
                    d_in, dims.d_h, dims.d_f, self.enc_widths[node.name], len(node.attention), dtype
                )
            else:
                nodes[node.name] = _ConditionalNode(self.enc_widths[node.name], dims.d_f, dtype)
        self.nodes = nn.ModuleDict(nodes)
        self.f0 = nn.Parameter(torch.empty(dims.d_f, dtype=dtype))

    def init_parameters(self, seed: int) -> "DagGenerator":
        """Deterministic initialization: uniform +-1/sqrt(fan_in) weights,
        zero biases (forget gate biased to 1), zero attention, zero context."""
        gen = torch.Generator().manual_seed(seed)

        def fill(weight: Tensor, fan_in: int):
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                weight.uniform_(-bound, bound, generator=gen)

        with torch.no_grad():
            self.f0.zero_()
        for name in self.graph.order:  # fixed traversal order
            mod = self.nodes[name]
            if isinstance(mod, _GeneratedNode):
                fill(mod.gates_w, mod.gates_w.shape[1])
                with torch.no_grad():
                    mod.gates_b.zero_()
                    mod.gates_b[mod.d_h : 2 * mod.d_h] = 1.0  # forget gate open
                fill(mod.out1_w, mod.out1_w.shape[1])
                fill(mod.out2_w, mod.out2_w.shape[1])
                fill(mod.intf_w, mod.intf_w.shape[1])
                with torch.no_grad():
                    mod.out1_b.zero_()
                    mod.out2_b.zero_()
                    mod.intf_b.zero_()
                    if mod.alpha is not None:
                        mod.alpha.zero_()
            else:
                fill(mod.w, mod.w.shape[1])
                with torch.no_grad():
                    mod.b.zero_()
        return self

    def output_activation(self, name: str, raw: Tensor) -> Tensor:
        """Per-block output activation: softmax over each categorical or
        mode-indicator block, tanh on the continuous scalar slot."""
        kind, _ = self._block_plan[name]
        if kind == "categorical":
            return torch.softmax(raw, dim=1)
        u = torch.tanh(raw[:, :1])
        modes = torch.softmax(raw[:, 1:], dim=1)
        return torch.cat([u, modes], dim=1)

    def forward(self, noise, ci_batch, order_log: list | None = None) -> Tensor:
        """Run the graph. ``noise`` maps generated-variable names to
        (batch, d_z) tensors; ``ci_batch`` maps conditional-input names to
        their encoded (batch, width) blocks. ``order_log``, when given,
        records the node names in processing order."""
        generated_names = [n.name for n in self.graph.generated]
        missing_noise = [n for n in generated_names if n not in noise]
        if missing_noise:
            raise ShapeMismatch(f"noise missing for generated variables: {missing_noise}")
        missing_ci = [n.name for n in self.graph.conditional if n.name not in ci_batch]
        if missing_ci:
            raise ShapeMismatch(f"conditional-input columns missing: {missing_ci}")

        batch = None
        for t in (*noise.values(), *ci_batch.values()):
            if batch is None:
                batch = t.shape[0]
            elif t.shape[0] != batch:
                raise ShapeMismatch("batch sizes disagree across inputs")
        if batch is None:
            raise ShapeMismatch("empty input")

        dtype = self.f0.dtype
        f_out: list[Tensor | None] = [None] * len(self.graph.nodes)
        c_out: list[Tensor | None] = [None] * len(self.graph.nodes)
        blocks: list[Tensor] = []

        for node in self.graph.nodes:
            if order_log is not None:
                order_log.append(node.name)
            mod = self.nodes[node.name]
            if node.role == ROLE_CONDITIONAL:
                encoded = ci_batch[node.name].to(dtype)
                f_out[node.index] = mod(encoded)
                continue

            if node.parents:
                f_mean = torch.stack([f_out[p] for p in node.parents], dim=0).mean(dim=0)
            else:
                f_mean = self.f0.expand(batch, -1)
            generated_parents = [
                p for p in node.parents if self.graph.nodes[p].role == ROLE_GENERATED
            ]
            if generated_parents:
                c_in = torch.stack([c_out[p] for p in generated_parents], dim=0).mean(dim=0)
            else:
                c_in = torch.zeros(batch, self.dims.d_h, dtype=dtype)

            if node.attention:
                a_t = attention([f_out[k] for k in node.attention], mod.alpha)
            else:
                a_t = torch.zeros(batch, self.dims.d_f, dtype=dtype)

            z_t = noise[node.name].to(dtype)
            if z_t.shape[1] != self.dims.d_z:
                raise ShapeMismatch(f"noise width {z_t.shape[1]} != d_z {self.dims.d_z}")
            i_t = node_input(z_t, f_mean, a_t)
            c_t, h_t = mod.cell_step(c_in, i_t)
            v_synth = self.output_activation(node.name, mod.output_head(h_t))
            f_out[node.index] = mod.input_transform(v_synth)
            c_out[node.index] = c_t
            blocks.append(v_synth)

        return torch.cat(blocks, dim=1)

    def ci_transform(self, name: str, encoded: Tensor) -> Tensor:
        """Apply one conditional-input transformer directly (exposed for tests
        and inspection)."""
        mod = self.nodes[name]
        if not isinstance(mod, _ConditionalNode):
            raise InputError(f"{name!r} is not a conditional-input variable")
        return mod(encoded)

    @property
    def generated_width(self) -> int:
        return sum(self.enc_widths[n.name] for n in self.graph.generated)


def init_params(
    graph: GeneratorGraph,
    encoders: EncoderSet,
    dims: GeneratorDims = GeneratorDims(),
    seed: int = 0,
    dtype=torch.float32,
) -> DagGenerator:
    """Build and deterministically initialize a generator."""
    return DagGenerator(graph, encoders, dims, dtype=dtype).init_parameters(seed)


def make_noise(
    graph: GeneratorGraph, batch_size: int, d_z: int, seed: int, dtype=torch.float32
) -> dict[str, Tensor]:
    """Standard-normal noise per generated node, independent across nodes,
    from one seeded stream."""
    gen = torch.Generator().manual_seed(seed)
    return {
        node.name: torch.randn(batch_size, d_z, generator=gen, dtype=dtype)
        for node in graph.generated
    }
