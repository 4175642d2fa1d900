"""FSKNet assembly: spectral planning, the layer graph, reports and checkpoints.

The network is a small DAG of :mod:`fsknet.layers` objects::

    input -> 3 x (strided Conv3D + BN + ReLU) -> SeparableConv3D -> reshape
          -> 1x1 Conv2D + BN + ReLU -> selective-kernel block(s)
          -> 2 x SeparableConv2D -> global average pool -> Dense + softmax

A selective-kernel block runs a 3x3 and a 5x5 deformable branch on the same
input, sums them for a squeeze-excitation gate, multiplies both branches by
that one gate and sums again.
"""
from __future__ import annotations

import dataclasses
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import layers as L
from .layers import ConfigError
from .tensor import ShapeError, TRAIN_DTYPE

CHECKPOINT_MAGIC = b"FSKNCKPT"
CHECKPOINT_VERSION = 1


def _spectral_out(d: int, k: int, s: int) -> int:
    return (d - k) // s + 1


def plan_spectral_stages(bands: int) -> list[tuple[int, int]]:
    """Pick ``(kernel, stride)`` for the three strided 3-D stages.

    The plan drives the spectral axis to exactly 1. The first two stages use
    ``(7, 7)`` and ``(5, 5)`` while those still leave at least two bands,
    falling back to ``(3, 3)`` (or ``(1, 1)`` once the axis is shorter than 3).
    The last stage uses ``(3, 3)`` when that already lands on 1, otherwise a
    kernel as long as the remaining axis with stride 1.

    >>> plan_spectral_stages(200)
    [(7, 7), (5, 5), (3, 3)]
    """
    if bands < 9:
        raise ConfigError(f"need at least 9 spectral bands to plan the 3-D stages, got {bands}")
    plan = []
    d = bands
    for preferred in (7, 5):
        if d >= preferred and _spectral_out(d, preferred, preferred) >= 2:
            k = preferred
        elif d >= 3:
            k = 3
        else:
            k = 1
        plan.append((k, k))
        d = _spectral_out(d, k, k)
    if d == 1:
        plan.append((1, 1))
    elif 3 <= d and _spectral_out(d, 3, 3) == 1:
        plan.append((3, 3))
    else:
        plan.append((d, 1))
    return plan


@dataclass
class FsknetConfig:
    patch: int = 19
    bands: int = 200
    classes: int = 16
    spectral_stages: list | None = None
    channels: tuple = (16, 32, 64, 128)
    squeeze_channels: int = 32
    sk_branch_channels: int = 64
    sk_kernels: tuple = (3, 5)
    sk_blocks: int = 1
    se_reduction: int = 16
    tail_channels: tuple = (64, 128)
    bn_epsilon: float = 1e-3
    bn_momentum: float = 0.99

    def __post_init__(self):
        if self.spectral_stages is None:
            self.spectral_stages = plan_spectral_stages(self.bands)
        self.spectral_stages = [tuple(int(v) for v in st) for st in self.spectral_stages]
        self.channels = tuple(self.channels)
        self.sk_kernels = tuple(self.sk_kernels)
        self.tail_channels = tuple(self.tail_channels)

    def validate(self) -> None:
        if self.patch < 1 or self.patch % 2 == 0:
            raise ConfigError(f"patch must be a positive odd integer, got {self.patch}")
        if self.classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}")
        if len(self.spectral_stages) != 3 or len(self.channels) != 4:
            raise ConfigError("expected 3 spectral stages and 4 stage widths")
        if self.sk_blocks < 1:
            raise ConfigError("at least one selective-kernel block is required")
        if self.sk_branch_channels % self.se_reduction:
            raise ConfigError(f"se_reduction {self.se_reduction} must divide "
                              f"sk_branch_channels {self.sk_branch_channels}")
        d = self.bands
        for k, s in self.spectral_stages:
            if k > d:
                raise ConfigError(f"spectral kernel {k} exceeds remaining bands {d}")
            d = _spectral_out(d, k, s)
        if d != 1:
            raise ConfigError(f"spectral stages {self.spectral_stages} leave {d} bands, expected 1")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        return {k: (list(map(list, v)) if k == "spectral_stages" else list(v) if isinstance(v, tuple) else v)
                for k, v in out.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "FsknetConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class Node:
    layer: L.Layer
    inputs: list[str] = field(default_factory=list)

    @property
    def name(self):
        return self.layer.name


class ModelGraph:
    """Ordered layer DAG with forward/backward over a batch."""

    def __init__(self, config: FsknetConfig, seed: int = 0, dtype=TRAIN_DTYPE):
        self.config = config
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.nodes: list[Node] = []
        self._index: dict[str, Node] = {}
        self.logits_node: str | None = None
        self.output_node: str | None = None
        self.outputs: dict[str, np.ndarray] = {}  # every node's output from the last forward

    def add(self, layer: L.Layer, *inputs: str) -> str:
        if layer.name in self._index:
            raise ConfigError(f"duplicate layer name {layer.name!r}")
        node = Node(layer, list(inputs))
        self.nodes.append(node)
        self._index[layer.name] = node
        return layer.name

    def __getitem__(self, name: str) -> L.Layer:
        return self._index[name].layer

    @property
    def layers(self) -> list[L.Layer]:
        return [n.layer for n in self.nodes]

    def build(self, rng: np.random.Generator) -> None:
        shapes: dict[str, tuple] = {}
        for node in self.nodes:
            try:
                shapes[node.name] = node.layer.build([shapes[i] for i in node.inputs], rng, self.dtype)
            except (ShapeError, ConfigError) as exc:
                raise ConfigError(f"layer {node.name!r} cannot be built: {exc}") from exc

    # -- execution ---------------------------------------------------------

    def forward(self, batch: np.ndarray, training: bool = False) -> np.ndarray:
        """Class probabilities ``[N, classes]`` for a ``[N, S, S, B, 1]`` batch."""
        batch = np.asarray(batch, dtype=self.dtype)
        if training and len(batch) < 2:
            raise ConfigError("training-mode batch normalisation needs at least 2 samples per batch")
        outs: dict[str, np.ndarray] = {}
        for node in self.nodes:
            args = [outs[i] for i in node.inputs] if node.inputs else [batch]
            outs[node.name] = node.layer.forward(*args, training=training)
        self.outputs = outs
        return outs[self.output_node]

    def backward(self, grad_logits: np.ndarray) -> np.ndarray:
        """Backpropagate a gradient w.r.t. the pre-softmax logits.

        Fills ``layer.grads`` on every layer and returns the input gradient
        (None unless ``input_grad`` was enabled on the first layer).
        """
        pending: dict[str, np.ndarray] = {self.logits_node: np.asarray(grad_logits, dtype=self.dtype)}
        stop = [n.name for n in self.nodes].index(self.logits_node)
        for node in reversed(self.nodes[:stop + 1]):
            if node.name not in pending:
                continue
            g = pending.pop(node.name)
            if not node.inputs:
                return g
            res = node.layer.backward(g)
            if not isinstance(res, tuple):
                res = (res,)
            for src, gi in zip(node.inputs, res):
                if gi is not None:
                    pending[src] = pending[src] + gi if src in pending else gi
        return None

    def predict(self, patches: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Inference-mode probabilities, evaluated in fixed-size chunks."""
        out = [self.forward(patches[i:i + batch_size], training=False)
               for i in range(0, len(patches), batch_size)]
        return np.concatenate(out, axis=0)

    # -- parameters --------------------------------------------------------

    def named_params(self, trainable: bool | None = None):
        for layer in self.layers:
            for key, value in layer.params.items():
                if trainable is None or layer.trainable[key] == trainable:
                    yield f"{layer.name}/{key}", layer, key

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: layer.params[key] for name, layer, key in self.named_params()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, layer, key in self.named_params():
            if name not in state:
                raise KeyError(f"checkpoint lacks tensor {name!r}")
            value = np.asarray(state[name], dtype=self.dtype)
            if value.shape != layer.params[key].shape:
                raise ShapeError(f"{name}: checkpoint shape {value.shape} != model {layer.params[key].shape}")
            layer.params[key] = value.copy()

    def param_count(self, trainable: bool | None = None) -> int:
        return sum(layer.param_count(trainable) for layer in self.layers)

    # -- reports -----------------------------------------------------------

    def _visible_source(self, name: str) -> str:
        node = self._index[name]
        while node.layer.hidden:
            node = self._index[node.inputs[0]]
        return node.name

    def param_report(self) -> "ParamReport":
        rows = []
        for node in self.nodes:
            layer = node.layer
            if layer.hidden:
                continue
            rows.append(LayerRow(
                name=layer.name,
                kind=layer.kind,
                output_shape=layer.output_shape,
                connected_to=[self._visible_source(i) for i in node.inputs],
                params=layer.param_count(),
                trainable=layer.param_count(True),
                non_trainable=layer.param_count(False),
            ))
        return ParamReport(rows)

    def flops_report(self) -> "FlopsReport":
        return FlopsReport([(n.name, n.layer.kind, n.layer.macs()) for n in self.nodes])


@dataclass
class LayerRow:
    name: str
    kind: str
    output_shape: tuple
    connected_to: list
    params: int
    trainable: int
    non_trainable: int


@dataclass
class ParamReport:
    rows: list[LayerRow]

    @property
    def total(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def trainable(self) -> int:
        return sum(r.trainable for r in self.rows)

    @property
    def non_trainable(self) -> int:
        return sum(r.non_trainable for r in self.rows)

    def format(self) -> str:
        def shape(s):
            return "(" + ", ".join(["None", *map(str, s)]) + ")"

        table = [("Layers", "Output Size", "Connected to", "Param")]
        table += [(f"{r.name} ({r.kind})", shape(r.output_shape), " ".join(r.connected_to), str(r.params))
                  for r in self.rows]
        widths = [max(len(row[i]) for row in table) for i in range(4)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in table]
        lines.insert(1, "-" * len(lines[0]))
        lines += [
            f"Total params: {self.total:,}",
            f"Trainable params: {self.trainable:,}",
            f"Non-trainable params: {self.non_trainable:,}",
            f"Totals (total / trainable / non-trainable): {self.total} / {self.trainable} / {self.non_trainable}",
        ]
        return "\n".join(lines)


MAC_CONVENTION = ("convolution MACs = output elements x kernel volume x input channels per filter; "
                  "dense MACs = Cin x Cout; deformable sampling = 4 per sampled element; "
                  "batch-norm, activation, pooling, add and multiply = 1 per element")


@dataclass
class FlopsReport:
    rows: list[tuple[str, str, int]]

    @property
    def total(self) -> int:
        return sum(r[2] for r in self.rows)

    def per_layer(self) -> dict[str, int]:
        return {name: macs for name, _, macs in self.rows}

    def format(self) -> str:
        width = max(len(r[0]) for r in self.rows)
        lines = [f"# {MAC_CONVENTION}"]
        lines += [f"{name.ljust(width)}  {macs:>12,}" for name, _, macs in self.rows]
        lines.append(f"{'total'.ljust(width)}  {self.total:>12,}")
        return "\n".join(lines)


class _Names:
    def __init__(self):
        self.counts: dict[str, int] = {}

    def __call__(self, prefix: str) -> str:
        self.counts[prefix] = self.counts.get(prefix, 0) + 1
        return f"{prefix}_{self.counts[prefix]}"


def build(config: FsknetConfig | None = None, seed: int = 0, dtype=TRAIN_DTYPE) -> ModelGraph:
    """Build and initialise an FSKNet graph. Same seed, same weights."""
    config = config or FsknetConfig()
    config.validate()
    g = ModelGraph(config, seed, dtype)
    name = _Names()
    eps, mom = config.bn_epsilon, config.bn_momentum

    def bn_relu(src):
        bn = g.add(L.BatchNorm(name("batch_normalization"), eps, mom), src)
        return g.add(L.Activation(name("activation"), "relu"), bn)

    x = g.add(L.Input(name("input"), (config.patch, config.patch, config.bands, 1)))
    for width, (k, s) in zip(config.channels[:3], config.spectral_stages):
        x = g.add(L.Conv(name("conv3d"), width, (3, 3, k), (1, 1, s)), x)
        x = bn_relu(x)
    x = g.add(L.SeparableConv(name("separable_conv3d"), config.channels[3], (3, 3, 1)), x)
    x = g.add(L.Activation(name("activation"), "relu"), x)
    x = g.add(L.Reshape(name("reshape")), x)
    x = g.add(L.Conv(name("conv2d"), config.squeeze_channels, (1, 1)), x)
    x = bn_relu(x)

    width = config.sk_branch_channels
    for _ in range(config.sk_blocks):
        branches = [g.add(L.DeformableConv2D(name("deformableconv"), width, k), x) for k in config.sk_kernels]
        branches = [bn_relu(b) for b in branches]
        fused = g.add(L.Add(name("add")), *branches)
        s = g.add(L.GlobalAveragePooling2D(name("global_average_pooling2d")), fused)
        s = g.add(L.Reshape(name("reshape"), (1, 1, width)), s)
        s = g.add(L.Dense(name("dense"), width // config.se_reduction), s)
        s = g.add(L.Activation(name("activation"), "relu"), s)
        s = g.add(L.Dense(name("dense"), width), s)
        s = g.add(L.Activation(name("activation"), "sigmoid"), s)
        scaled = [g.add(L.Multiply(name("multiply")), b, s) for b in branches]
        x = g.add(L.Add(name("add")), *scaled)

    for width in config.tail_channels:
        x = g.add(L.SeparableConv(name("separable_conv2d"), width, (3, 3)), x)
        x = g.add(L.Activation(name("activation"), "relu"), x)
    x = g.add(L.GlobalAveragePooling2D(name("global_average_pooling2d")), x)
    g.logits_node = g.add(L.Dense(name("dense"), config.classes, use_bias=True), x)
    g.output_node = g.add(L.Activation(name("activation"), "softmax"), g.logits_node)

    g.build(np.random.default_rng(seed))
    g[g.nodes[1].name].input_grad = False
    return g


# ---------------------------------------------------------------------------
# checkpoint container
# ---------------------------------------------------------------------------

def save_checkpoint(graph: ModelGraph, path) -> None:
    """Write the graph to the binary container documented in the README.

    Layout: 8-byte magic, uint32 version, uint64 header length, UTF-8 JSON
    header, then every tensor's raw little-endian bytes in header order.
    """
    tensors = []
    blobs = []
    offset = 0
    for name, value in graph.state_dict().items():
        data = np.ascontiguousarray(value, dtype=value.dtype.newbyteorder("<")).tobytes()
        tensors.append({"name": name, "shape": list(value.shape),
                        "dtype": value.dtype.newbyteorder("<").str, "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    header = json.dumps({"format_version": CHECKPOINT_VERSION, "config": graph.config.to_dict(),
                         "seed": graph.seed, "dtype": graph.dtype.name, "tensors": tensors},
                        sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


class CheckpointError(ValueError):
    pass


def load_checkpoint(path) -> ModelGraph:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not an FSKNet checkpoint")
    version, hlen = struct.unpack_from("<IQ", raw, 8)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    start = 8 + struct.calcsize("<IQ")
    header = json.loads(raw[start:start + hlen])
    body = raw[start + hlen:]
    graph = build(FsknetConfig.from_dict(header["config"]), header["seed"], header["dtype"])
    state = {}
    for t in header["tensors"]:
        chunk = body[t["offset"]:t["offset"] + t["nbytes"]]
        if len(chunk) != t["nbytes"]:
            raise CheckpointError(f"{path}: tensor {t['name']} truncated "
                                  f"({len(chunk)} of {t['nbytes']} bytes)")
        state[t["name"]] = np.frombuffer(chunk, dtype=np.dtype(t["dtype"])).reshape(t["shape"])
    graph.load_state_dict(state)
    return graph

