"""Loss, optimisers, the training loop and the finite-difference gradient checker."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers as L
from .data import PatchSet
from .metrics import confusion_matrix, overall_accuracy, summarize
from .model import FsknetConfig, ModelGraph, build
from .tensor import CHECK_DTYPE

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class LabelError(ValueError):
    pass


def cross_entropy(probs: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood of 1-based ``labels`` and its logit gradient.

    The gradient ``(p - onehot) / N`` is taken w.r.t. the logits that produced
    ``probs`` through a softmax.
    """
    probs = np.asarray(probs)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = probs.shape
    if labels.shape != (n,) or labels.min() < 1 or labels.max() > c:
        raise LabelError(f"labels must be {n} integers in 1..{c}")
    rows = np.arange(n)
    picked = probs[rows, labels - 1]
    loss = float(-np.mean(np.log(np.maximum(picked, PROB_FLOOR))))
    grad = probs.copy()
    grad[rows, labels - 1] -= 1
    return loss, grad / n


# ---------------------------------------------------------------------------
# optimisers
# ---------------------------------------------------------------------------

class SGD:
    def __init__(self, lr=1e-2):
        self.lr = lr

    def step(self, graph: ModelGraph) -> None:
        for _, layer, key in graph.named_params(trainable=True):
            layer.params[key] -= (self.lr * layer.grads[key]).astype(layer.params[key].dtype)


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, graph: ModelGraph) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr = math.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for name, layer, key in graph.named_params(trainable=True):
            g = layer.grads[key]
            m = self.m[name] = b1 * self.m.get(name, 0) + (1 - b1) * g
            v = self.v[name] = b2 * self.v.get(name, 0) + (1 - b2) * g * g
            layer.params[key] -= (self.lr * corr * m / (np.sqrt(v) + self.eps)).astype(layer.params[key].dtype)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def make_optimizer(self):
        if self.optimizer == "adam":
            return Adam(self.learning_rate, self.beta1, self.beta2, self.epsilon)
        if self.optimizer == "sgd":
            return SGD(self.learning_rate)
        raise L.ConfigError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainReport:
    history: list[dict] = field(default_factory=list)
    seconds: float = 0.0
    diverged: bool = False
    last_good_epoch: int = 0
    final: dict = field(default_factory=dict)

    @property
    def losses(self) -> list[float]:
        return [h["loss"] for h in self.history]

    def log_lines(self) -> str:
        """Tab-separated ``epoch loss val_oa`` lines; no timing, so reruns match bytewise."""
        lines = ["epoch\tloss\tval_oa"]
        lines += [f"{h['epoch']}\t{h['loss']!r}\t{h['val_oa']!r}" for h in self.history]
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return asdict(self)


class DivergenceError(FloatingPointError):
    pass


def iterate_batches(n: int, batch_size: int, rng: np.random.Generator | None):
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        if len(idx) < 2 and start:
            break  # batch statistics need two samples; drop a trailing singleton
        yield idx


def train_step(graph: ModelGraph, x: np.ndarray, y: np.ndarray, optimizer) -> float:
    probs = graph.forward(x, training=True)
    loss, grad = cross_entropy(probs, y)
    graph.backward(grad)
    optimizer.step(graph)
    return loss


def evaluate(graph: ModelGraph, data: PatchSet, batch_size: int = 64) -> dict:
    probs = graph.predict(data.patches, batch_size)
    pred = probs.argmax(axis=1) + 1
    cm = confusion_matrix(data.labels, pred, graph.config.classes)
    return {"predictions": pred, "confusion": cm, **summarize(cm)}


def fit(graph: ModelGraph, train: PatchSet, val: PatchSet | None, cfg: TrainConfig,
        callback=None) -> TrainReport:
    """Mini-batch training with BN in training mode; one val pass per epoch."""
    if cfg.batch_size < 2:
        raise L.ConfigError("batch_size must be >= 2 for batch normalisation")
    optimizer = cfg.make_optimizer()
    shuffle_rng = np.random.default_rng(cfg.seed)
    report = TrainReport()
    start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        total, seen = 0.0, 0
        for idx in iterate_batches(len(train), cfg.batch_size, shuffle_rng if cfg.shuffle else None):
            loss = train_step(graph, train.patches[idx], train.labels[idx], optimizer)
            if not math.isfinite(loss):
                report.diverged = True
                break
            total += loss * len(idx)
            seen += len(idx)
        if report.diverged:
            log.error("loss diverged in epoch %d; last good epoch %d", epoch, report.last_good_epoch)
            break
        val_oa = float("nan")
        if val is not None and len(val):
            val_oa = overall_accuracy(evaluate(graph, val, cfg.batch_size * 2)["confusion"])
        entry = {"epoch": epoch, "loss": total / seen, "val_oa": val_oa}
        report.history.append(entry)
        report.last_good_epoch = epoch
        log.info("epoch %d loss %.5f val_oa %.4f", epoch, entry["loss"], val_oa)
        if callback is not None:
            callback(entry)
    report.seconds = time.perf_counter() - start
    return report


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

STEP = 1e-5
LAYER_TOLERANCE = 1e-4
GRAPH_TOLERANCE = 1e-3
GRAD_FLOOR = 1e-6  # denominators below this are treated as absolute error


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), GRAD_FLOOR)


@dataclass
class GradcheckEntry:
    case: str
    group: str
    max_rel_error: float
    tolerance: float
    checked: int

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tolerance)


@dataclass
class GradcheckReport:
    entries: list[GradcheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def format(self) -> str:
        lines = []
        for e in self.entries:
            verdict = "PASS" if e.passed else "FAIL"
            lines.append(f"{verdict}  {e.case:<24} {e.group:<34} max rel err {e.max_rel_error:.3e} "
                         f"(tol {e.tolerance:.0e}, {e.checked} entries)")
        return "\n".join(lines)


def _numeric_check(case, arrays, analytic, loss_fn, trials, rng, tol, h=STEP):
    entries = []
    for group, arr in arrays.items():
        flat = arr.reshape(-1)
        if not np.shares_memory(flat, arr):
            raise L.StateError(f"{group}: gradcheck needs a contiguous array")
        picks = np.arange(flat.size) if flat.size <= trials else rng.choice(flat.size, trials, replace=False)
        worst = 0.0
        for i in picks:
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_fn()
            flat[i] = orig - h
            lm = loss_fn()
            flat[i] = orig
            num = (lp - lm) / (2 * h)
            worst = max(worst, relative_error(float(analytic[group].reshape(-1)[i]), num))
        entries.append(GradcheckEntry(case, group, worst, tol, len(picks)))
    return entries


def gradcheck_layer(layer: L.Layer, inputs: list[np.ndarray], case: str | None = None,
                    trials: int = 30, tolerance: float = LAYER_TOLERANCE, seed: int = 0,
                    training: bool = True) -> list[GradcheckEntry]:
    """Compare ``layer.backward`` with central differences of ``sum(R * out)``.

    ``R`` is a fixed random projection so that no gradient vanishes by
    symmetry (a plain sum would, e.g., through batch normalisation).
    """
    rng = np.random.default_rng(seed)
    inputs = [np.ascontiguousarray(x, dtype=CHECK_DTYPE) for x in inputs]
    out = layer.forward(*inputs, training=training)
    proj = rng.standard_normal(out.shape)

    def loss():
        return float(np.sum(proj * layer.forward(*inputs, training=training)))

    layer.forward(*inputs, training=training)
    in_grads = layer.backward(proj)
    if not isinstance(in_grads, tuple):
        in_grads = (in_grads,)
    arrays, analytic = {}, {}
    for i, (x, g) in enumerate(zip(inputs, in_grads)):
        if g is not None:
            arrays[f"input{i}"], analytic[f"input{i}"] = x, np.broadcast_to(g, x.shape)
    for key, value in layer.params.items():
        if layer.trainable[key]:
            arrays[key], analytic[key] = value, layer.grads[key].copy()
    return _numeric_check(case or layer.name, arrays, analytic, loss, trials, rng, tolerance)


def gradcheck_graph(graph: ModelGraph, batch: np.ndarray, labels, case: str = "graph",
                    trials: int = 20, tolerance: float = GRAPH_TOLERANCE, seed: int = 0,
                    training: bool = True) -> list[GradcheckEntry]:
    """Central differences of the cross-entropy loss on ``trials`` random weights."""
    rng = np.random.default_rng(seed)
    batch = np.asarray(batch, dtype=CHECK_DTYPE)

    def loss():
        return cross_entropy(graph.forward(batch, training=training), labels)[0]

    probs = graph.forward(batch, training=training)
    graph.backward(cross_entropy(probs, labels)[1])
    params = [(name, layer, key) for name, layer, key in graph.named_params(trainable=True)]
    sizes = np.array([layer.params[key].size for _, layer, key in params])
    flat_picks = rng.choice(sizes.sum(), trials, replace=False)
    owners = np.searchsorted(np.cumsum(sizes), flat_picks, side="right")
    worst = 0.0
    for pick, owner in zip(flat_picks, owners):
        name, layer, key = params[owner]
        i = pick - (sizes[:owner].sum() if owner else 0)
        flat = layer.params[key].reshape(-1)
        analytic = float(layer.grads[key].reshape(-1)[i])
        orig = flat[i]
        flat[i] = orig + STEP
        lp = loss()
        flat[i] = orig - STEP
        lm = loss()
        flat[i] = orig
        worst = max(worst, relative_error(analytic, (lp - lm) / (2 * STEP)))
    return [GradcheckEntry(case, f"{trials} random weights", worst, tolerance, trials)]


def tiny_config(**overrides) -> FsknetConfig:
    """A narrow FSKNet that keeps the full topology but runs in milliseconds."""
    kw = dict(patch=13, bands=12, classes=3, channels=(2, 3, 4, 5), squeeze_channels=3,
              sk_branch_channels=4, se_reduction=2, tail_channels=(3, 4))
    kw.update(overrides)
    return FsknetConfig(**kw)


def randomize_offsets(graph: ModelGraph, scale: float = 0.3, seed: int = 0) -> None:
    """Give the offset predictors non-zero weights so sampling leaves the pixel grid."""
    rng = np.random.default_rng(seed)
    for layer in graph.layers:
        if isinstance(layer, L.DeformableConv2D):
            w = layer.params["offset_kernel"]
            layer.params["offset_kernel"] = (rng.standard_normal(w.shape) * scale).astype(w.dtype)


def _se_gate_graph(seed: int) -> ModelGraph:
    """Feature map -> SE gate -> gated map -> pool -> dense softmax head."""
    g = ModelGraph(tiny_config(), seed, CHECK_DTYPE)
    x = g.add(L.Input("input", (4, 4, 6)))
    s = g.add(L.GlobalAveragePooling2D("gap"), x)
    s = g.add(L.Reshape("reshape", (1, 1, 6)), s)
    s = g.add(L.Dense("squeeze", 3), s)
    s = g.add(L.Activation("relu", "relu"), s)
    s = g.add(L.Dense("excite", 6), s)
    s = g.add(L.Activation("sigmoid", "sigmoid"), s)
    y = g.add(L.Multiply("scale"), x, s)
    y = g.add(L.GlobalAveragePooling2D("head_gap"), y)
    g.logits_node = g.add(L.Dense("head", 3, use_bias=True), y)
    g.output_node = g.add(L.Activation("softmax", "softmax"), g.logits_node)
    g.build(np.random.default_rng(seed))
    return g


def gradcheck_suite(seed: int = 0, trials: int = 30) -> GradcheckReport:
    """Every layer type at 1e-4 plus a full tiny FSKNet at 1e-3, all in float64."""
    rng = np.random.default_rng(seed)
    report = GradcheckReport()

    def layer_case(case, layer, *shapes, scale=1.0, **kw):
        layer.build([s[1:] for s in shapes], rng, CHECK_DTYPE)
        xs = [rng.standard_normal(s) * scale for s in shapes]
        report.entries.extend(gradcheck_layer(layer, xs, case, trials=trials, seed=seed, **kw))
        return layer

    layer_case("conv3d", L.Conv("c3", 2, (2, 2, 2), use_bias=True), (2, 3, 3, 4, 1))
    layer_case("conv3d strided", L.Conv("c3s", 3, (3, 3, 3), (1, 1, 2)), (2, 5, 5, 7, 2))
    layer_case("separable conv3d", L.SeparableConv("s3", 3, (3, 3, 1)), (2, 5, 5, 1, 2))
    layer_case("conv2d 1x1", L.Conv("c2", 3, (1, 1)), (2, 4, 4, 5))
    layer_case("conv2d same", L.Conv("c2s", 3, (3, 3), padding="same", use_bias=True), (2, 4, 5, 2))
    layer_case("separable conv2d", L.SeparableConv("s2", 3, (3, 3)), (2, 5, 5, 2))
    for k in (3, 5):
        d = L.DeformableConv2D(f"deform{k}", 3, k)
        d.build([(5, 5, 2)], rng, CHECK_DTYPE)
        d.params["offset_kernel"] = rng.standard_normal(d.params["offset_kernel"].shape) * 0.2
        x = rng.standard_normal((2, 5, 5, 2))
        report.entries.extend(gradcheck_layer(d, [x], f"deformable conv {k}x{k}", trials=trials, seed=seed))
    layer_case("batchnorm train", L.BatchNorm("bn"), (3, 2, 2, 3))
    layer_case("batchnorm infer", L.BatchNorm("bn_i"), (3, 2, 2, 3), training=False)
    layer_case("dense", L.Dense("dense", 4, use_bias=True), (3, 5))
    layer_case("relu", L.Activation("relu", "relu"), (3, 7))
    layer_case("sigmoid", L.Activation("sigmoid", "sigmoid"), (3, 7))
    layer_case("softmax", L.Activation("softmax", "softmax"), (3, 7))
    layer_case("multiply gate", L.Multiply("mul"), (2, 3, 3, 4), (2, 1, 1, 4))

    se = _se_gate_graph(seed)
    x = rng.standard_normal((3, 4, 4, 6))
    report.entries.extend(gradcheck_graph(se, x, np.array([1, 2, 3]), "SE gate + softmax CE",
                                          trials=trials, tolerance=LAYER_TOLERANCE, seed=seed))

    graph = build(tiny_config(), seed, CHECK_DTYPE)
    randomize_offsets(graph, seed=seed)
    cfg = graph.config
    batch = rng.standard_normal((2, cfg.patch, cfg.patch, cfg.bands, 1))
    report.entries.extend(gradcheck_graph(graph, batch, np.array([1, 3]), "full tiny FSKNet",
                                          trials=20, tolerance=GRAPH_TOLERANCE, seed=seed))
    return report


def save_report(report: TrainReport, log_path, summary_path, extra: dict | None = None) -> None:
    with open(log_path, "w") as fh:
        fh.write(report.log_lines())
    summary = report.summary()
    if extra:
        summary.update(extra)
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
