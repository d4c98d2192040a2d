"""Dense layers with hand-written backward passes.

Every layer caches what it needs during ``forward`` and consumes it in
``backward``; ``backward`` returns the gradient w.r.t. the layer input and
accumulates parameter gradients into ``Parameter.grad``.
"""

import math

import numpy as np

from ..errors import BackwardBeforeForward, ShapeMismatch
from .rng import RngStream


class Parameter:
    __slots__ = ("value", "grad", "name")

    def __init__(self, value, name=""):
        self.value = value
        self.grad = np.zeros_like(value)
        self.name = name

    def zero_grad(self):
        self.grad[...] = 0

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.value.shape})"


class Layer:
    training = True

    def parameters(self):
        return []

    def buffers(self):
        """Non-trainable state saved in checkpoints."""
        return []

    def children(self):
        return []

    def train(self, mode=True):
        self.training = mode
        for c in self.children():
            c.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def astype(self, dtype):
        for p in self.parameters():
            p.value = p.value.astype(dtype)
            p.grad = np.zeros_like(p.value)
        for b in self.buffers():
            b.value = b.value.astype(dtype)
        return self

    def __call__(self, x):
        return self.forward(x)


class Linear(Layer):
    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        self.in_features = in_features
        self.out_features = out_features
        # Kaiming-uniform for ReLU networks
        bound = math.sqrt(6.0 / in_features)
        rng = rng if rng is not None else RngStream(0)
        w = rng.uniform(-bound, bound, size=(out_features, in_features))
        self.weight = Parameter(w.astype(dtype), "weight")
        self.bias = Parameter(np.zeros(out_features, dtype=dtype), "bias")
        self._x = None

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeMismatch(f"Linear expects (B, {self.in_features}), got {x.shape}")
        self._x = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, g):
        if self._x is None:
            raise BackwardBeforeForward("Linear.backward called before forward")
        self.weight.grad += g.T @ self._x
        self.bias.grad += g.sum(axis=0)
        return g @ self.weight.value

    def spec(self):
        return {"kind": "linear", "in": self.in_features, "out": self.out_features}


class BatchNorm1d(Layer):
    def __init__(self, features, momentum=0.1, eps=1e-5, dtype=np.float32):
        self.features = features
        self.momentum = momentum
        self.eps = eps
        self.track_running_stats = True
        self.gamma = Parameter(np.ones(features, dtype=dtype), "gamma")
        self.beta = Parameter(np.zeros(features, dtype=dtype), "beta")
        self.running_mean = Parameter(np.zeros(features, dtype=dtype), "running_mean")
        self.running_var = Parameter(np.ones(features, dtype=dtype), "running_var")
        self._cache = None

    def parameters(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [self.running_mean, self.running_var]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.features:
            raise ShapeMismatch(f"BatchNorm1d expects (B, {self.features}), got {x.shape}")
        if self.training:
            n = x.shape[0]
            if n < 2:
                raise ShapeMismatch("batch norm in train mode needs at least 2 rows")
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            if self.track_running_stats:
                m = self.momentum
                rm, rv = self.running_mean, self.running_var
                rm.value = ((1 - m) * rm.value + m * mu).astype(rm.value.dtype)
                rv.value = ((1 - m) * rv.value + m * var * n / (n - 1)).astype(rv.value.dtype)
        else:
            mu = self.running_mean.value
            var = self.running_var.value
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv_std
        self._cache = (xhat, inv_std, self.training)
        return xhat * self.gamma.value + self.beta.value

    def backward(self, g):
        if self._cache is None:
            raise BackwardBeforeForward("BatchNorm1d.backward called before forward")
        xhat, inv_std, training = self._cache
        self.gamma.grad += (g * xhat).sum(axis=0)
        self.beta.grad += g.sum(axis=0)
        dxhat = g * self.gamma.value
        if not training:
            return dxhat * inv_std
        n = g.shape[0]
        return (inv_std / n) * (
            n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )

    def spec(self):
        return {"kind": "batchnorm", "features": self.features,
                "momentum": self.momentum, "eps": self.eps}


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, g):
        if self._mask is None:
            raise BackwardBeforeForward("ReLU.backward called before forward")
        return g * self._mask

    def spec(self):
        return {"kind": "relu"}


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by 1/(1-rate) at train time."""

    def __init__(self, rate=0.5, rng=None):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self.rng = rng if rng is not None else RngStream(0, ("dropout",))
        self._scale = None

    def forward(self, x):
        if not self.training or self.rate == 0.0:
            self._scale = None
            return x
        keep = self.rng.random(x.shape) >= self.rate
        self._scale = keep.astype(x.dtype) / (1.0 - self.rate)
        return x * self._scale

    def backward(self, g):
        return g if self._scale is None else g * self._scale

    def spec(self):
        return {"kind": "dropout", "rate": self.rate}


class Sequential(Layer):
    def __init__(self, *layers):
        self.layers = list(layers)
        self._ran_forward = False

    def children(self):
        return self.layers

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def buffers(self):
        return [b for layer in self.layers for b in layer.buffers()]

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        self._ran_forward = True
        return x

    def backward(self, g):
        if not self._ran_forward:
            raise BackwardBeforeForward("backward called before forward")
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def spec(self):
        return {"kind": "sequential", "layers": [layer.spec() for layer in self.layers]}

    def set_running_stats_tracking(self, flag):
        for m in iter_modules(self):
            if isinstance(m, BatchNorm1d):
                m.track_running_stats = flag


def dense_unit(width_in, width_out, dropout, rng, dtype):
    """Linear -> BatchNorm -> ReLU -> Dropout."""
    return [
        Linear(width_in, width_out, rng.child("linear"), dtype),
        BatchNorm1d(width_out, dtype=dtype),
        ReLU(),
        Dropout(dropout, rng.child("dropout")),
    ]


class ResidualBlock(Sequential):
    """Two dense units with an identity skip around them."""

    def __init__(self, width, dropout=0.5, rng=None, dtype=np.float32):
        rng = rng if rng is not None else RngStream(0)
        super().__init__(
            *dense_unit(width, width, dropout, rng.child("a"), dtype),
            *dense_unit(width, width, dropout, rng.child("b"), dtype),
        )
        self.width = width

    def forward(self, x):
        if x.shape[-1] != self.width:
            raise ShapeMismatch(f"ResidualBlock expects width {self.width}, got {x.shape[-1]}")
        return x + super().forward(x)

    def backward(self, g):
        return g + super().backward(g)

    def spec(self):
        return {"kind": "residual", "width": self.width, "layers": [l.spec() for l in self.layers]}


def iter_modules(layer):
    yield layer
    for c in layer.children():
        yield from iter_modules(c)


def residual_mlp(in_dim, out_dim, hidden, blocks, dropout=0.5, rng=None, dtype=np.float32):
    """Input projection, ``blocks`` residual blocks, linear read-out."""
    rng = rng if rng is not None else RngStream(0)
    layers = dense_unit(in_dim, hidden, dropout, rng.child("stem"), dtype)
    layers += [ResidualBlock(hidden, dropout, rng.child(f"block{i}"), dtype) for i in range(blocks)]
    layers.append(Linear(hidden, out_dim, rng.child("head"), dtype))
    return Sequential(*layers)


def build_from_spec(spec, dtype=np.float32):
    """Rebuild an (uninitialised) network from ``Layer.spec()`` output."""
    kind = spec["kind"]
    if kind == "linear":
        return Linear(spec["in"], spec["out"], dtype=dtype)
    if kind == "batchnorm":
        return BatchNorm1d(spec["features"], spec["momentum"], spec["eps"], dtype=dtype)
    if kind == "relu":
        return ReLU()
    if kind == "dropout":
        return Dropout(spec["rate"])
    if kind == "sequential":
        return Sequential(*[build_from_spec(s, dtype) for s in spec["layers"]])
    if kind == "residual":
        block = ResidualBlock.__new__(ResidualBlock)
        Sequential.__init__(block, *[build_from_spec(s, dtype) for s in spec["layers"]])
        block.width = spec["width"]
        return block
    raise ValueError(f"unknown layer kind {kind!r}")
