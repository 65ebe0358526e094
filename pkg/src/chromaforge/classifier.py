"""A small feed-forward softmax classifier with hand-written backprop.

Activations are NHWC. Inputs may be a single example shaped like
``model.input_shape`` or a batch with one extra leading axis; outputs follow
the same convention. Dense weights are stored ``(out, in)``; 3x3 convolution
weights are ``(3, 3, in, out)`` with zero padding of one pixel.
"""

from __future__ import annotations

import base64
import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .optim import Adam

FORMAT_NAME = "chromaforge-model"
FORMAT_VERSION = 1
KINDS = ("dense", "conv3x3", "relu", "maxpool2x2", "flatten", "softmax")


class ModelFormatError(ValueError):
    """Base class for model file problems."""


class ModelVersionError(ModelFormatError):
    """The file was written by an incompatible format version or uses unknown layers."""


class CorruptModelError(ModelFormatError):
    """The file is unreadable or its weights disagree with the declared shapes."""


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    dims: tuple[int, ...] = ()


@dataclass
class ClassifierModel:
    layers: list[LayerSpec]
    weights: list[list[np.ndarray]]
    input_shape: tuple[int, ...]
    shapes: list[tuple[int, ...]] = field(init=False, repr=False)

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        self.shapes = _infer_shapes(self.layers, self.input_shape)
        if len(self.weights) != len(self.layers):
            raise ValueError("need one weight list per layer")
        for spec, ws in zip(self.layers, self.weights):
            expected = _param_shapes(spec)
            if [tuple(w.shape) for w in ws] != expected:
                raise ValueError(f"{spec.kind} layer expects weights {expected}")

    @property
    def num_classes(self) -> int:
        return self.shapes[-1][0]

    def copy(self) -> "ClassifierModel":
        return copy.deepcopy(self)


def _param_shapes(spec: LayerSpec) -> list[tuple[int, ...]]:
    if spec.kind == "dense":
        n_in, n_out = spec.dims
        return [(n_out, n_in), (n_out,)]
    if spec.kind == "conv3x3":
        c_in, c_out = spec.dims
        return [(3, 3, c_in, c_out), (c_out,)]
    return []


def _infer_shapes(layers: list[LayerSpec], input_shape: tuple[int, ...]) -> list[tuple[int, ...]]:
    """Output shape of every layer; raises on incompatible stacks."""
    if not layers or layers[-1].kind != "softmax":
        raise ValueError("final layer must be softmax")
    if len(layers) < 2 or layers[-2].kind != "dense":
        raise ValueError("softmax must be preceded by a dense layer")
    shape = input_shape
    shapes = []
    for spec in layers:
        if spec.kind not in KINDS:
            raise ModelVersionError(f"unknown layer kind {spec.kind!r}")
        if spec.kind == "dense":
            if len(shape) != 1 or shape[0] != spec.dims[0]:
                raise ValueError(f"dense{spec.dims} cannot take input {shape}")
            shape = (spec.dims[1],)
        elif spec.kind == "conv3x3":
            if len(shape) != 3 or shape[2] != spec.dims[0]:
                raise ValueError(f"conv3x3{spec.dims} cannot take input {shape}")
            shape = (shape[0], shape[1], spec.dims[1])
        elif spec.kind == "maxpool2x2":
            if len(shape) != 3 or shape[0] < 2 or shape[1] < 2:
                raise ValueError(f"maxpool2x2 cannot take input {shape}")
            shape = (shape[0] // 2, shape[1] // 2, shape[2])
        elif spec.kind == "flatten":
            shape = (math.prod(shape),)
        shapes.append(shape)
    return shapes


def init_model(layers: list[LayerSpec], input_shape, seed: int = 0) -> ClassifierModel:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights = []
    for spec in layers:
        if spec.kind == "dense":
            n_in, n_out = spec.dims
            fan_in, fan_out = n_in, n_out
        elif spec.kind == "conv3x3":
            fan_in, fan_out = 9 * spec.dims[0], 9 * spec.dims[1]
        else:
            weights.append([])
            continue
        w_shape, b_shape = _param_shapes(spec)
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append([rng.uniform(-limit, limit, size=w_shape), np.zeros(b_shape)])
    return ClassifierModel(list(layers), weights, tuple(input_shape))


def preset_layers(arch: str, num_classes: int, image_size=(32, 32)) -> list[LayerSpec]:
    h, w = image_size
    if arch == "mlp-small":
        return [
            LayerSpec("flatten"),
            LayerSpec("dense", (h * w * 3, 128)),
            LayerSpec("relu"),
            LayerSpec("dense", (128, num_classes)),
            LayerSpec("softmax"),
        ]
    if arch == "cnn-small":
        return [
            LayerSpec("conv3x3", (3, 16)),
            LayerSpec("relu"),
            LayerSpec("maxpool2x2"),
            LayerSpec("conv3x3", (16, 32)),
            LayerSpec("relu"),
            LayerSpec("maxpool2x2"),
            LayerSpec("flatten"),
            LayerSpec("dense", ((h // 4) * (w // 4) * 32, num_classes)),
            LayerSpec("softmax"),
        ]
    raise ValueError(f"unknown architecture {arch!r}")


def build(arch: str, num_classes: int, seed: int = 0, image_size=(32, 32)) -> ClassifierModel:
    return init_model(preset_layers(arch, num_classes, image_size), (*image_size, 3), seed)


# -- forward / backward -----------------------------------------------------


@dataclass
class ForwardTrace:
    inputs: list[np.ndarray]
    caches: list[object]
    logits: np.ndarray
    probs: np.ndarray
    batched: bool

    @property
    def label(self):
        if self.batched:
            return np.argmax(self.probs, axis=1)
        return int(np.argmax(self.probs))


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _conv_cols(x: np.ndarray) -> np.ndarray:
    n, h, w, c = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(padded, (3, 3), axis=(1, 2))  # n, h, w, c, 3, 3
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, 9 * c)


def _layer_forward(spec: LayerSpec, ws: list[np.ndarray], x: np.ndarray):
    kind = spec.kind
    if kind == "dense":
        W, b = ws
        return x @ W.T + b, None
    if kind == "conv3x3":
        W, b = ws
        n, h, w, _ = x.shape
        cols = _conv_cols(x)
        out = cols @ W.reshape(-1, W.shape[3]) + b
        return out.reshape(n, h, w, W.shape[3]), cols
    if kind == "relu":
        return np.maximum(x, 0.0), None
    if kind == "maxpool2x2":
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        # window members in row-major order: (0,0), (0,1), (1,0), (1,1)
        a = x[:, 0 : 2 * h2 : 2, 0 : 2 * w2 : 2]
        b = x[:, 0 : 2 * h2 : 2, 1 : 2 * w2 : 2]
        c_ = x[:, 1 : 2 * h2 : 2, 0 : 2 * w2 : 2]
        d = x[:, 1 : 2 * h2 : 2, 1 : 2 * w2 : 2]
        out = np.maximum(np.maximum(a, b), np.maximum(c_, d))
        # first maximum on ties
        idx = np.where(a == out, 0, np.where(b == out, 1, np.where(c_ == out, 2, 3)))
        return out, idx
    if kind == "flatten":
        return x.reshape(x.shape[0], -1), None
    if kind == "softmax":
        return softmax(x), None
    raise ModelVersionError(f"unknown layer kind {kind!r}")


def _layer_backward(spec: LayerSpec, ws, x: np.ndarray, cache, grad: np.ndarray, want_params: bool):
    """Return (grad wrt layer input, list of param grads)."""
    kind = spec.kind
    if kind == "dense":
        W, _ = ws
        pgrads = [grad.T @ x, grad.sum(axis=0)] if want_params else []
        return grad @ W, pgrads
    if kind == "conv3x3":
        W, _ = ws
        n, h, w, c_in = x.shape
        c_out = W.shape[3]
        g2 = grad.reshape(-1, c_out)
        pgrads = [(cache.T @ g2).reshape(W.shape), g2.sum(axis=0)] if want_params else []
        dcols = (g2 @ W.reshape(-1, c_out).T).reshape(n, h, w, 3, 3, c_in)
        dpad = np.zeros((n, h + 2, w + 2, c_in))
        for i in range(3):
            for j in range(3):
                dpad[:, i : i + h, j : j + w, :] += dcols[:, :, :, i, j, :]
        return dpad[:, 1:-1, 1:-1, :], pgrads
    if kind == "relu":
        return grad * (x > 0.0), []
    if kind == "maxpool2x2":
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        routed = np.zeros((n, h2, w2, c, 4))
        np.put_along_axis(routed, cache[..., None], grad[..., None], axis=-1)
        routed = routed.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        dx = np.zeros_like(x)
        dx[:, : 2 * h2, : 2 * w2, :] = routed.reshape(n, 2 * h2, 2 * w2, c)
        return dx, []
    if kind == "flatten":
        return grad.reshape(x.shape), []
    raise ModelVersionError(f"cannot backprop through {kind!r}")


def _as_batch(model: ClassifierModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape == model.input_shape:
        return x[None], False
    if x.shape[1:] == model.input_shape:
        return x, True
    raise ValueError(f"input shape {x.shape} does not match model input {model.input_shape}")


def forward(model: ClassifierModel, img) -> ForwardTrace:
    x, batched = _as_batch(model, img)
    inputs, caches = [], []
    for spec, ws in zip(model.layers[:-1], model.weights[:-1]):
        inputs.append(x)
        x, cache = _layer_forward(spec, ws, x)
        caches.append(cache)
    logits = x
    probs = softmax(logits)
    if not batched:
        logits, probs = logits[0], probs[0]
    return ForwardTrace(inputs, caches, logits, probs, batched)


def predict(model: ClassifierModel, img):
    return forward(model, img).label


def _backward(model: ClassifierModel, trace: ForwardTrace, grad_logits: np.ndarray, want_params: bool):
    grad = np.asarray(grad_logits, dtype=np.float64)
    if not trace.batched:
        grad = grad[None]
    if grad.shape != trace.inputs[-1].shape[:1] + (model.num_classes,):
        raise ValueError(f"logit gradient has shape {grad.shape}")
    pgrads: list[list[np.ndarray]] = [[] for _ in model.layers]
    for i in range(len(model.layers) - 2, -1, -1):
        grad, pg = _layer_backward(model.layers[i], model.weights[i], trace.inputs[i], trace.caches[i], grad, want_params)
        pgrads[i] = pg
    return grad, pgrads


def input_gradient(model: ClassifierModel, img, loss_grad_on_logits, trace: ForwardTrace | None = None) -> np.ndarray:
    """Gradient of ``<loss_grad_on_logits, logits(img)>`` w.r.t. the input."""
    if trace is None:
        trace = forward(model, img)
    grad, _ = _backward(model, trace, loss_grad_on_logits, want_params=False)
    return grad if trace.batched else grad[0]


def cross_entropy(probs: np.ndarray, labels) -> float:
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(labels)
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.sum(np.log(np.maximum(picked, 1e-300))))


def cross_entropy_logit_grad(probs: np.ndarray, labels) -> np.ndarray:
    grad = np.array(probs, dtype=np.float64, copy=True)
    if grad.ndim == 1:
        grad[labels] -= 1.0
    else:
        grad[np.arange(len(labels)), labels] -= 1.0
    return grad


def weight_gradient(model: ClassifierModel, batch, reduction: str = "mean"):
    """Cross-entropy loss over ``batch`` and its gradient w.r.t. every weight.

    ``batch`` is a list of LabeledImage or an ``(images, labels)`` pair.
    Returns ``(loss, grads)`` where grads mirrors ``model.weights``.
    """
    images, labels = _unpack(batch)
    if len(labels) == 0:
        raise ValueError("empty batch")
    trace = forward(model, images)
    loss = cross_entropy(trace.probs, labels)
    _, grads = _backward(model, trace, cross_entropy_logit_grad(trace.probs, labels), want_params=True)
    if reduction == "mean":
        n = len(labels)
        loss /= n
        grads = [[g / n for g in gs] for gs in grads]
    elif reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    return loss, grads


def _unpack(batch) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, tuple):
        images, labels = batch
        return np.asarray(images, dtype=np.float64), np.asarray(labels, dtype=np.intp)
    batch = list(batch)
    if not batch:
        return np.zeros((0,)), np.zeros((0,), dtype=np.intp)
    return np.stack([b.image for b in batch]), np.array([b.label for b in batch], dtype=np.intp)


def accuracy(model: ClassifierModel, data, chunk: int = 256) -> float:
    images, labels = _unpack(data)
    if len(labels) == 0:
        return float("nan")
    correct = 0
    for i in range(0, len(labels), chunk):
        correct += int(np.sum(forward(model, images[i : i + chunk]).label == labels[i : i + chunk]))
    return correct / len(labels)


def train(model: ClassifierModel, dataset, epochs: int, learning_rate: float = 1e-3, seed: int = 0,
          holdout=None, batch_size: int = 32, log=None):
    """Mini-batch Adam on cross-entropy. Returns a trained copy and per-epoch history."""
    images, labels = _unpack(dataset)
    if len(labels) == 0:
        raise ValueError("empty training set")
    model = model.copy()
    rng = np.random.default_rng(seed)
    params = [w for ws in model.weights for w in ws]
    opt = Adam(lr=learning_rate)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(labels))
        total = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            loss, grads = weight_gradient(model, (images[idx], labels[idx]))
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"loss became {loss} in epoch {epoch + 1}, batch at {start}")
            opt.step(params, [g for gs in grads for g in gs])
            total += loss * len(idx)
        row = {
            "epoch": epoch + 1,
            "loss": total / len(labels),
            "train_acc": accuracy(model, (images, labels)),
            "holdout_acc": accuracy(model, holdout) if holdout is not None else float("nan"),
        }
        history.append(row)
        if log is not None:
            log(row)
    return model, history


# -- serialization ----------------------------------------------------------


def _encode(arr: np.ndarray) -> dict:
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii"),
    }


def _decode(doc: dict) -> np.ndarray:
    shape = tuple(int(s) for s in doc["shape"])
    raw = base64.b64decode(doc["data"], validate=True)
    if len(raw) != 8 * math.prod(shape):
        raise CorruptModelError(f"declared shape {shape} needs {math.prod(shape)} values, file holds {len(raw) // 8}")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def model_to_json(model: ClassifierModel) -> str:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "input_shape": list(model.input_shape),
        "layers": [{"kind": s.kind, "dims": list(s.dims)} for s in model.layers],
        "weights": [[_encode(w) for w in ws] for ws in model.weights],
    }
    return json.dumps(doc, indent=1)


def model_from_json(text: str) -> ClassifierModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptModelError(f"not a model file: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise CorruptModelError("not a model file")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelVersionError(f"unsupported model format version {doc.get('version')}")
    try:
        layers = []
        for layer in doc["layers"]:
            if layer["kind"] not in KINDS:
                raise ModelVersionError(f"unknown layer kind {layer['kind']!r}")
            layers.append(LayerSpec(layer["kind"], tuple(int(d) for d in layer["dims"])))
        weights = [[_decode(w) for w in ws] for ws in doc["weights"]]
        return ClassifierModel(layers, weights, tuple(doc["input_shape"]))
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModelError(f"malformed model file: {exc}") from exc


def save_model(model: ClassifierModel, path) -> None:
    Path(path).write_text(model_to_json(model))


def load_model(path) -> ClassifierModel:
    return model_from_json(Path(path).read_text())
