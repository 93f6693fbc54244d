"""Built-in desk-scale classifiers: linear softmax and a two-layer ReLU MLP.

Forward passes and analytic gradients are written as explicit row-major
loops so the summation order is pinned and results are reproducible
bit-for-bit across runs. Weights round-trip through a JSON document using
Python's shortest round-trip float formatting.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

from .core import (
    DataError,
    DimensionError,
    Logits,
    ParseError,
    SchemaError,
    Vector,
)
from .noise import LcgStream

MODEL_KINDS = ("linear", "mlp")


def _softmax(logits: list[float]) -> Logits:
    """Numerically stable softmax with max subtraction; fixed-order sums."""
    top = max(logits)
    exps = [math.exp(v - top) for v in logits]
    total = 0.0
    for e in exps:
        total += e
    return tuple(e / total for e in exps)


def _dot_rows(weights: Sequence[Sequence[float]], bias: Sequence[float],
              x: Sequence[float]) -> list[float]:
    """Row-major matrix-vector product plus bias, accumulated left to right."""
    out = []
    for row, b in zip(weights, bias):
        acc = 0.0
        for w, v in zip(row, x):
            acc += w * v
        out.append(acc + b)
    return out


@dataclass(frozen=True)
class LinearSoftmaxModel:
    """softmax(W x + b) with an m-by-d weight matrix."""

    weights: tuple[tuple[float, ...], ...]
    bias: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.bias):
            raise DimensionError(
                f"weights rows {len(self.weights)} != bias length {len(self.bias)}"
            )
        if len(self.weights) < 2:
            raise DimensionError("need at least 2 classes")
        widths = {len(row) for row in self.weights}
        if len(widths) != 1:
            raise DimensionError(f"ragged weight rows with widths {sorted(widths)}")

    @property
    def d(self) -> int:
        return len(self.weights[0])

    @property
    def m(self) -> int:
        return len(self.weights)

    def evaluate(self, x: Sequence[float]) -> Logits:
        if len(x) != self.d:
            raise DimensionError(f"input length {len(x)} != d={self.d}")
        return _softmax(_dot_rows(self.weights, self.bias, x))

    def gradient(self, x: Sequence[float], c: int) -> Vector:
        """Analytic d p_c / d x = p_c * (W_c - sum_j p_j W_j)."""
        if not 0 <= c < self.m:
            raise DimensionError(f"class {c} outside 0..{self.m - 1}")
        p = self.evaluate(x)
        out = []
        for k in range(self.d):
            mix = 0.0
            for j in range(self.m):
                mix += p[j] * self.weights[j][k]
            out.append(p[c] * (self.weights[c][k] - mix))
        return tuple(out)


@dataclass(frozen=True)
class MlpModel:
    """softmax(W2 relu(W1 x + b1) + b2); ReLU subgradient at 0 is taken as 0."""

    w1: tuple[tuple[float, ...], ...]
    b1: tuple[float, ...]
    w2: tuple[tuple[float, ...], ...]
    b2: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.w1) != len(self.b1) or len(self.w1) < 1:
            raise DimensionError("hidden layer shape mismatch")
        if len(self.w2) != len(self.b2) or len(self.w2) < 2:
            raise DimensionError("output layer shape mismatch")
        if any(len(row) != len(self.w1[0]) for row in self.w1):
            raise DimensionError("ragged first-layer rows")
        if any(len(row) != len(self.w1) for row in self.w2):
            raise DimensionError(
                f"second-layer width {len(self.w2[0])} != hidden width {len(self.w1)}"
            )

    @property
    def d(self) -> int:
        return len(self.w1[0])

    @property
    def h(self) -> int:
        return len(self.w1)

    @property
    def m(self) -> int:
        return len(self.w2)

    def _hidden(self, x: Sequence[float]) -> tuple[list[float], list[float]]:
        pre = _dot_rows(self.w1, self.b1, x)
        act = [v if v > 0.0 else 0.0 for v in pre]
        return pre, act

    def evaluate(self, x: Sequence[float]) -> Logits:
        if len(x) != self.d:
            raise DimensionError(f"input length {len(x)} != d={self.d}")
        _, act = self._hidden(x)
        return _softmax(_dot_rows(self.w2, self.b2, act))

    def gradient(self, x: Sequence[float], c: int) -> Vector:
        if not 0 <= c < self.m:
            raise DimensionError(f"class {c} outside 0..{self.m - 1}")
        pre, act = self._hidden(x)
        p = self.evaluate(x)
        # d p_c / d z_j at the output logits z = W2 act + b2.
        dz = [p[c] * ((1.0 if j == c else 0.0) - p[j]) for j in range(self.m)]
        # Back through the output layer into the hidden activations.
        dact = []
        for t in range(self.h):
            acc = 0.0
            for j in range(self.m):
                acc += dz[j] * self.w2[j][t]
            dact.append(acc)
        # Through ReLU (strictly positive preactivations only) into the input.
        out = []
        for k in range(self.d):
            acc = 0.0
            for t in range(self.h):
                if pre[t] > 0.0:
                    acc += dact[t] * self.w1[t][k]
            out.append(acc)
        return tuple(out)


def random_linear(d: int, m: int, rng_state: int, scale: float = 1.0) -> LinearSoftmaxModel:
    """Gaussian-initialized linear model; deterministic given rng_state."""
    stream = LcgStream(rng_state)
    vals = _gauss_values(stream, m * d + m, scale)
    weights = tuple(tuple(vals[r * d: (r + 1) * d]) for r in range(m))
    bias = tuple(vals[m * d:])
    return LinearSoftmaxModel(weights=weights, bias=bias)


def random_mlp(d: int, h: int, m: int, rng_state: int, scale: float = 1.0) -> MlpModel:
    stream = LcgStream(rng_state)
    vals = _gauss_values(stream, h * d + h + m * h + m, scale)
    pos = 0
    w1 = tuple(tuple(vals[pos + r * d: pos + (r + 1) * d]) for r in range(h))
    pos += h * d
    b1 = tuple(vals[pos: pos + h])
    pos += h
    w2 = tuple(tuple(vals[pos + r * h: pos + (r + 1) * h]) for r in range(m))
    pos += m * h
    b2 = tuple(vals[pos: pos + m])
    return MlpModel(w1=w1, b1=b1, w2=w2, b2=b2)


def _gauss_values(stream: LcgStream, count: int, scale: float) -> list[float]:
    vals: list[float] = []
    while len(vals) < count:
        a, b = stream.next_gauss_pair()
        vals.append(a * scale)
        vals.append(b * scale)
    return vals[:count]


def crossentropy_loss(model: LinearSoftmaxModel, xs: Sequence[Vector],
                      ys: Sequence[int]) -> float:
    total = 0.0
    for x, y in zip(xs, ys):
        p = model.evaluate(x)
        total += -math.log(max(p[y], 1e-300))
    return total / len(xs)


def fit_logistic(dataset, epochs: int = 500, learning_rate: float = 0.1,
                 rng_state: int = 0,
                 loss_history: list[float] | None = None) -> LinearSoftmaxModel:
    """Full-batch gradient descent on cross-entropy.

    Deterministic given rng_state (LCG Gaussian init, scale 0.01). A step that
    would increase the loss is rejected and the learning rate halved, up to 20
    halvings over the whole run, so the recorded loss never increases.
    """
    if len(dataset.examples) == 0:
        raise DataError("cannot fit on an empty dataset")
    xs = [x for x, _ in dataset.examples]
    ys = [y for _, y in dataset.examples]
    d, m = dataset.d, dataset.m
    model = random_linear(d, m, rng_state, scale=0.01)
    model = LinearSoftmaxModel(model.weights, tuple(0.0 for _ in range(m)))
    lr = learning_rate
    halvings = 0
    loss = crossentropy_loss(model, xs, ys)
    if loss_history is not None:
        loss_history.append(loss)
    for _ in range(epochs):
        grad_w = [[0.0] * d for _ in range(m)]
        grad_b = [0.0] * m
        inv = 1.0 / len(xs)
        for x, y in zip(xs, ys):
            p = model.evaluate(x)
            for j in range(m):
                err = (p[j] - (1.0 if j == y else 0.0)) * inv
                grad_b[j] += err
                row = grad_w[j]
                for k in range(d):
                    row[k] += err * x[k]
        stepped = None
        while halvings <= 20:
            cand = LinearSoftmaxModel(
                weights=tuple(
                    tuple(model.weights[j][k] - lr * grad_w[j][k] for k in range(d))
                    for j in range(m)
                ),
                bias=tuple(model.bias[j] - lr * grad_b[j] for j in range(m)),
            )
            cand_loss = crossentropy_loss(cand, xs, ys)
            if cand_loss <= loss:
                stepped = (cand, cand_loss)
                break
            if halvings == 20:
                break
            halvings += 1
            lr *= 0.5
        if stepped is None:
            break  # no step size left that still decreases the loss
        model, loss = stepped
        if loss_history is not None:
            loss_history.append(loss)
    return model


def _require_matrix(doc: dict, key: str, rows: int, cols: int) -> tuple[tuple[float, ...], ...]:
    raw = doc[key]
    if not isinstance(raw, list) or len(raw) != rows:
        raise SchemaError(f'field "{key}" must be a {rows}x{cols} matrix')
    out = []
    for r, row in enumerate(raw):
        if not isinstance(row, list) or len(row) != cols:
            raise SchemaError(
                f'field "{key}" row {r} has length '
                f"{len(row) if isinstance(row, list) else 'non-list'}, expected {cols}"
            )
        out.append(tuple(float(v) for v in row))
    return tuple(out)


def _require_vector(doc: dict, key: str, length: int) -> tuple[float, ...]:
    raw = doc[key]
    if not isinstance(raw, list) or len(raw) != length:
        raise SchemaError(f'field "{key}" must be a length-{length} list')
    return tuple(float(v) for v in raw)


def save_model(model: LinearSoftmaxModel | MlpModel, path: str) -> None:
    if isinstance(model, LinearSoftmaxModel):
        doc = {
            "kind": "linear",
            "d": model.d,
            "m": model.m,
            "weights": [list(row) for row in model.weights],
            "bias": list(model.bias),
        }
    elif isinstance(model, MlpModel):
        doc = {
            "kind": "mlp",
            "d": model.d,
            "m": model.m,
            "h": model.h,
            "weights": [[list(r) for r in model.w1], [list(r) for r in model.w2]],
            "bias": [list(model.b1), list(model.b2)],
        }
    else:
        raise SchemaError(f"cannot save model of type {type(model).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path: str) -> LinearSoftmaxModel | MlpModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"model file {path} must hold a JSON object")
    kind = doc.get("kind")
    if kind not in MODEL_KINDS:
        raise ParseError(
            f"model file {path}: unknown kind {kind!r}; supported kinds: "
            + ", ".join(MODEL_KINDS)
        )
    for key in ("d", "m"):
        if not isinstance(doc.get(key), int) or doc[key] < 1:
            raise SchemaError(f'model file {path}: field "{key}" must be a positive int')
    d, m = doc["d"], doc["m"]
    if kind == "linear":
        return LinearSoftmaxModel(
            weights=_require_matrix(doc, "weights", m, d),
            bias=_require_vector(doc, "bias", m),
        )
    if not isinstance(doc.get("h"), int) or doc["h"] < 1:
        raise SchemaError(f'model file {path}: field "h" must be a positive int')
    h = doc["h"]
    raw_w = doc.get("weights")
    raw_b = doc.get("bias")
    if not isinstance(raw_w, list) or len(raw_w) != 2:
        raise SchemaError(f'model file {path}: field "weights" must hold two layers')
    if not isinstance(raw_b, list) or len(raw_b) != 2:
        raise SchemaError(f'model file {path}: field "bias" must hold two layers')
    layer = {"weights": raw_w[0], "bias": raw_b[0]}
    w1 = _require_matrix(layer, "weights", h, d)
    b1 = _require_vector(layer, "bias", h)
    layer = {"weights": raw_w[1], "bias": raw_b[1]}
    w2 = _require_matrix(layer, "weights", m, h)
    b2 = _require_vector(layer, "bias", m)
    return MlpModel(w1=w1, b1=b1, w2=w2, b2=b2)
