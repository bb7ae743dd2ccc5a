"""Network layers: forward passes, backprop, and parameter bookkeeping.

Every layer follows the same protocol:

  forward(x, training=False, rng=None) -> output, caching whatever the
      backward pass needs. `rng` is only consumed by dropout in training mode.
  backward(grad) -> gradient w.r.t. the layer input, storing parameter
      gradients on the layer. Calling it before forward is a StateError.
      Parameters themselves are never mutated by backward.
  param_items() / grad_items() -> aligned [(name, array)] lists; composite
      blocks prefix their children's names. Gradients are overwritten, not
      accumulated, on each backward.

Data layout is [B, C, H, W] for images and [B, N] for flat features. Each
layer that owns a pre-activation caches it and applies its own activation
derivative during backward, so chaining layers is plain multiplication.
"""

import numpy as np

from .activations import (
    ACTIVATION_NAMES,
    activation_apply,
    activation_derivative,
    softmax,
)
from .errors import ConfigError, ShapeError, StateError
from .tensor import col2im_add, im2col, out_extent, pad2d, pool_argmax


def he_normal(rng, shape, fan_in):
    """Zero-mean normal with std sqrt(2/fan_in); the ReLU-era default."""
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def glorot_uniform(rng, shape, fan_in, fan_out):
    """Uniform on [-limit, limit] with limit sqrt(6/(fan_in+fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _init_weights(rng, shape, fan_in, fan_out, activation, override=None):
    scheme = override or ("he" if activation == "relu" else "glorot")
    if scheme == "he":
        return he_normal(rng, shape, fan_in)
    if scheme == "glorot":
        return glorot_uniform(rng, shape, fan_in, fan_out)
    raise ConfigError(f"unknown init scheme {override!r}")


def _check_activation(name):
    if name not in ACTIVATION_NAMES:
        raise ConfigError(f"unknown activation {name!r}")
    return name


def _positive(value, label):
    if int(value) != value or value < 1:
        raise ConfigError(f"{label} must be a positive integer, got {value}")
    return int(value)


class Layer:
    kind = "layer"

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def param_items(self):
        return []

    def grad_items(self):
        return []

    def params(self):
        return [a for _, a in self.param_items()]

    def grads(self):
        return [a for _, a in self.grad_items()]

    def _need(self, cached, what="forward"):
        if cached is None:
            raise StateError(f"{self.kind}: backward called before {what}")
        return cached


class Dense(Layer):
    """Fully connected layer: a = act(x @ W.T + b). W is [out, in]."""

    kind = "dense"

    def __init__(self, in_features, out_features, activation="identity", *, rng,
                 weight_init=None):
        self.in_features = _positive(in_features, "in_features")
        self.out_features = _positive(out_features, "out_features")
        self.activation = _check_activation(activation)
        self.weights = _init_weights(
            rng, (self.out_features, self.in_features),
            self.in_features, self.out_features, activation, weight_init,
        )
        self.bias = np.zeros(self.out_features)
        self.d_weights = None
        self.d_bias = None
        self._x = None
        self._z = None

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(
                f"dense expects [B, {self.in_features}], got {x.shape}"
            )
        self._x = x
        self._z = x @ self.weights.T + self.bias
        return activation_apply(self.activation, self._z)

    def backward(self, grad):
        x = self._need(self._x)
        dz = grad * activation_derivative(self.activation, self._z)
        self.d_weights = dz.T @ x
        self.d_bias = dz.sum(axis=0)
        return dz @ self.weights

    def param_items(self):
        return [("W", self.weights), ("b", self.bias)]

    def grad_items(self):
        self._need(self.d_weights, "backward")
        return [("W", self.d_weights), ("b", self.d_bias)]


class Conv2D(Layer):
    """2-D convolution (cross-correlation) with symmetric zero padding.

    Kernels are [filters, in_channels, k, k]; output spatial extent along
    each axis is floor((size + 2*pad - k) / stride) + 1.
    """

    kind = "conv"

    def __init__(self, in_channels, filters, kernel_size, stride=1, pad=0,
                 activation="relu", *, rng, weight_init=None):
        self.in_channels = _positive(in_channels, "in_channels")
        self.filters = _positive(filters, "filters")
        self.kernel_size = _positive(kernel_size, "kernel_size")
        self.stride = _positive(stride, "stride")
        if int(pad) != pad or pad < 0:
            raise ConfigError(f"pad must be a non-negative integer, got {pad}")
        self.pad = int(pad)
        self.activation = _check_activation(activation)
        fan_in = self.in_channels * self.kernel_size**2
        fan_out = self.filters * self.kernel_size**2
        self.weights = _init_weights(
            rng, (self.filters, self.in_channels, self.kernel_size, self.kernel_size),
            fan_in, fan_out, activation, weight_init,
        )
        self.bias = np.zeros(self.filters)
        self.d_weights = None
        self.d_bias = None
        self._cols = None
        self._z = None
        self._padded_shape = None

    def output_shape(self, in_shape):
        ch, h, w = in_shape
        if ch != self.in_channels:
            raise ShapeError(f"conv expects {self.in_channels} channels, got {ch}")
        k, s, p = self.kernel_size, self.stride, self.pad
        return (
            self.filters,
            out_extent(h + 2 * p, k, s),
            out_extent(w + 2 * p, k, s),
        )

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4:
            raise ShapeError(f"conv expects [B,C,H,W], got {x.shape}")
        _, ho, wo = self.output_shape(x.shape[1:])
        xp = pad2d(x, self.pad)
        self._padded_shape = xp.shape
        k = self.kernel_size
        self._cols = im2col(xp, k, k, self.stride)
        kmat = self.weights.reshape(self.filters, -1)
        z = np.matmul(kmat, self._cols) + self.bias[:, None]
        self._z = z.reshape(x.shape[0], self.filters, ho, wo)
        return activation_apply(self.activation, self._z)

    def backward(self, grad):
        cols = self._need(self._cols)
        dz = grad * activation_derivative(self.activation, self._z)
        bsz = dz.shape[0]
        dzmat = dz.reshape(bsz, self.filters, -1)
        self.d_weights = np.einsum("bop,bkp->ok", dzmat, cols).reshape(
            self.weights.shape
        )
        self.d_bias = dz.sum(axis=(0, 2, 3))
        kmat = self.weights.reshape(self.filters, -1)
        dcols = np.matmul(kmat.T, dzmat)
        k = self.kernel_size
        dxp = col2im_add(dcols, self._padded_shape, k, k, self.stride)
        if self.pad:
            return dxp[:, :, self.pad:-self.pad, self.pad:-self.pad]
        return dxp

    def param_items(self):
        return [("W", self.weights), ("b", self.bias)]

    def grad_items(self):
        self._need(self.d_weights, "backward")
        return [("W", self.d_weights), ("b", self.d_bias)]


class _Pool2D(Layer):
    def __init__(self, window, stride, pad=0):
        self.window = _positive(window, "window")
        self.stride = _positive(stride, "stride")
        if int(pad) != pad or pad < 0:
            raise ConfigError(f"pad must be a non-negative integer, got {pad}")
        self.pad = int(pad)
        self._padded_shape = None
        self._out_hw = None

    def output_shape(self, in_shape):
        ch, h, w = in_shape
        return (
            ch,
            out_extent(h + 2 * self.pad, self.window, self.stride),
            out_extent(w + 2 * self.pad, self.window, self.stride),
        )

    def _prepare(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4:
            raise ShapeError(f"pool expects [B,C,H,W], got {x.shape}")
        _, ho, wo = self.output_shape(x.shape[1:])
        xp = pad2d(x, self.pad)
        self._padded_shape = xp.shape
        self._out_hw = (ho, wo)
        return xp

    def _spread(self, target, piece, position):
        # Add `piece` onto every input cell that window-offset `position`
        # touches; overlapping windows accumulate naturally.
        i, j = divmod(position, self.window)
        ho, wo = self._out_hw
        ylim = i + self.stride * (ho - 1) + 1
        xlim = j + self.stride * (wo - 1) + 1
        target[:, :, i:ylim:self.stride, j:xlim:self.stride] += piece

    def _crop(self, dxp):
        if self.pad:
            return dxp[:, :, self.pad:-self.pad, self.pad:-self.pad]
        return dxp


class MaxPool2D(_Pool2D):
    """Window maximum. Ties route the gradient to the first position in
    row-major window order."""

    kind = "maxpool"

    def __init__(self, window, stride, pad=0):
        super().__init__(window, stride, pad)
        self._argmax = None

    def forward(self, x, training=False, rng=None):
        xp = self._prepare(x)
        self._argmax = pool_argmax(xp, self.window, self.stride)
        k = self.window
        cols = im2col(xp, k, k, self.stride)
        bsz, ch = xp.shape[0], xp.shape[1]
        ho, wo = self._out_hw
        windows = cols.reshape(bsz, ch, k * k, ho * wo)
        return windows.max(axis=2).reshape(bsz, ch, ho, wo)

    def backward(self, grad):
        arg = self._need(self._argmax)
        dxp = np.zeros(self._padded_shape)
        for position in range(self.window * self.window):
            mask = arg == position
            if mask.any():
                self._spread(dxp, grad * mask, position)
        return self._crop(dxp)


class AvgPool2D(_Pool2D):
    """Window mean; the gradient spreads uniformly over each window."""

    kind = "avgpool"

    def forward(self, x, training=False, rng=None):
        xp = self._prepare(x)
        k = self.window
        cols = im2col(xp, k, k, self.stride)
        bsz, ch = xp.shape[0], xp.shape[1]
        ho, wo = self._out_hw
        windows = cols.reshape(bsz, ch, k * k, ho * wo)
        return windows.mean(axis=2).reshape(bsz, ch, ho, wo)

    def backward(self, grad):
        self._need(self._padded_shape)
        share = grad / float(self.window * self.window)
        dxp = np.zeros(self._padded_shape)
        for position in range(self.window * self.window):
            self._spread(dxp, share, position)
        return self._crop(dxp)


class GlobalAvgPool(Layer):
    """Mean over all spatial positions, [B,C,H,W] -> [B,C]."""

    kind = "globalavgpool"

    def __init__(self):
        self._in_shape = None

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4:
            raise ShapeError(f"global average pool expects [B,C,H,W], got {x.shape}")
        self._in_shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, grad):
        shape = self._need(self._in_shape)
        cell = 1.0 / (shape[2] * shape[3])
        return np.broadcast_to(
            grad[:, :, None, None] * cell, shape
        ).copy()


class Flatten(Layer):
    """[B,C,H,W] -> [B, C*H*W] in row-major order."""

    kind = "flatten"

    def __init__(self):
        self._in_shape = None

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim < 2:
            raise ShapeError(f"flatten expects a batch, got {x.shape}")
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        shape = self._need(self._in_shape)
        return grad.reshape(shape)


class Dropout(Layer):
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p).

    Identity at inference and whenever p == 0. In training mode the mask is
    drawn from the rng passed to forward.
    """

    kind = "dropout"

    def __init__(self, p):
        if not 0.0 <= p < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {p}")
        self.p = float(p)
        self._scaled_mask = None

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if not training or self.p == 0.0:
            self._scaled_mask = 1.0
            return x.copy()
        if rng is None:
            raise ConfigError("dropout in training mode needs an rng")
        keep = rng.random(x.shape) >= self.p
        self._scaled_mask = keep.astype(np.float64) / (1.0 - self.p)
        return x * self._scaled_mask

    def backward(self, grad):
        mask = self._need(self._scaled_mask)
        return grad * mask


class SoftmaxHead(Layer):
    """Classifier head: dense projection to K logits, then softmax.

    backward(grad) takes the gradient at the probabilities and routes it
    through the softmax Jacobian; backward_logits(dz) takes a gradient
    already expressed at the logits (the fused cross-entropy path).
    """

    kind = "softmax"

    def __init__(self, in_features, classes, *, rng):
        self.in_features = _positive(in_features, "in_features")
        self.classes = _positive(classes, "classes")
        self.weights = glorot_uniform(
            rng, (self.classes, self.in_features), self.in_features, self.classes
        )
        self.bias = np.zeros(self.classes)
        self.d_weights = None
        self.d_bias = None
        self._x = None
        self._y = None

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(
                f"softmax head expects [B, {self.in_features}], got {x.shape}"
            )
        self._x = x
        self._y = softmax(x @ self.weights.T + self.bias)
        return self._y

    def backward(self, grad):
        y = self._need(self._y)
        inner = (grad * y).sum(axis=1, keepdims=True)
        return self.backward_logits(y * (grad - inner))

    def backward_logits(self, dz):
        x = self._need(self._x)
        self.d_weights = dz.T @ x
        self.d_bias = dz.sum(axis=0)
        return dz @ self.weights

    def param_items(self):
        return [("W", self.weights), ("b", self.bias)]

    def grad_items(self):
        self._need(self.d_weights, "backward")
        return [("W", self.d_weights), ("b", self.d_bias)]


class _Block(Layer):
    """Shared plumbing for composite blocks built from child layers."""

    def _children(self):
        raise NotImplementedError

    def param_items(self):
        items = []
        for name, child in self._children():
            items.extend((f"{name}.{k}", v) for k, v in child.param_items())
        return items

    def grad_items(self):
        items = []
        for name, child in self._children():
            items.extend((f"{name}.{k}", v) for k, v in child.grad_items())
        return items


class InceptionBlock(_Block):
    """Four parallel branches concatenated along channels.

    1x1 conv | 1x1 reduce -> 3x3 | 1x1 reduce -> 5x5 | 3x3 max pool -> 1x1.
    Every conv is ReLU-activated and spatial extent is preserved, so the
    output is [B, b1 + b3 + b5 + pp, H, W].
    """

    kind = "inception"

    def __init__(self, in_channels, b1, b3_reduce, b3, b5_reduce, b5, pool_proj,
                 *, rng):
        for label, value in (
            ("b1", b1), ("b3_reduce", b3_reduce), ("b3", b3),
            ("b5_reduce", b5_reduce), ("b5", b5), ("pool_proj", pool_proj),
        ):
            _positive(value, label)
        self.in_channels = _positive(in_channels, "in_channels")
        self.widths = (b1, b3, b5, pool_proj)
        self.conv1 = Conv2D(in_channels, b1, 1, 1, 0, "relu", rng=rng)
        self.conv3_reduce = Conv2D(in_channels, b3_reduce, 1, 1, 0, "relu", rng=rng)
        self.conv3 = Conv2D(b3_reduce, b3, 3, 1, 1, "relu", rng=rng)
        self.conv5_reduce = Conv2D(in_channels, b5_reduce, 1, 1, 0, "relu", rng=rng)
        self.conv5 = Conv2D(b5_reduce, b5, 5, 1, 2, "relu", rng=rng)
        self.pool = MaxPool2D(3, 1, pad=1)
        self.pool_proj = Conv2D(in_channels, pool_proj, 1, 1, 0, "relu", rng=rng)

    @property
    def out_channels(self):
        return sum(self.widths)

    def _children(self):
        return [
            ("b1", self.conv1),
            ("b3r", self.conv3_reduce),
            ("b3", self.conv3),
            ("b5r", self.conv5_reduce),
            ("b5", self.conv5),
            ("pp", self.pool_proj),
        ]

    def forward(self, x, training=False, rng=None):
        outs = [
            self.conv1.forward(x, training, rng),
            self.conv3.forward(self.conv3_reduce.forward(x, training, rng), training, rng),
            self.conv5.forward(self.conv5_reduce.forward(x, training, rng), training, rng),
            self.pool_proj.forward(self.pool.forward(x, training, rng), training, rng),
        ]
        return np.concatenate(outs, axis=1)

    def backward(self, grad):
        b1, b3, b5, pp = self.widths
        edges = np.cumsum([0, b1, b3, b5, pp])
        pieces = [grad[:, edges[i]:edges[i + 1]] for i in range(4)]
        dx = self.conv1.backward(pieces[0])
        dx = dx + self.conv3_reduce.backward(self.conv3.backward(pieces[1]))
        dx = dx + self.conv5_reduce.backward(self.conv5.backward(pieces[2]))
        dx = dx + self.pool.backward(self.pool_proj.backward(pieces[3]))
        return dx


class ResidualBlock(_Block):
    """Identity-skip block: ReLU(conv(ReLU(conv(x))) + x).

    Both convs are 3x3, stride 1, pad 1 with `channels` filters, so shapes
    are preserved and the skip needs no projection. The second conv is
    linear; the ReLU happens after the skip is added.
    """

    kind = "residual"

    def __init__(self, channels, *, rng):
        self.channels = _positive(channels, "channels")
        self.conv1 = Conv2D(channels, channels, 3, 1, 1, "relu", rng=rng)
        self.conv2 = Conv2D(
            channels, channels, 3, 1, 1, "identity", rng=rng, weight_init="he"
        )
        self._sum = None

    def _children(self):
        return [("conv1", self.conv1), ("conv2", self.conv2)]

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(
                f"residual block expects [B, {self.channels}, H, W], got {x.shape}"
            )
        branch = self.conv2.forward(self.conv1.forward(x, training, rng), training, rng)
        self._sum = branch + x
        return np.maximum(self._sum, 0.0)

    def backward(self, grad):
        total = self._need(self._sum)
        dsum = grad * (total > 0)
        dbranch = self.conv1.backward(self.conv2.backward(dsum))
        return dsum + dbranch


class DenseNetBlock(_Block):
    """Densely connected block: n repetitions, each seeing every earlier map.

    A repetition is 1x1 bottleneck (to 4*growth channels, ReLU) then padded
    3x3 (to growth channels, ReLU); its input is the channel concat of the
    block input and all previous repetition outputs. The block output is
    that full concatenation: in_channels + n*growth channels. n == 0 is the
    identity.
    """

    kind = "denseblock"

    BOTTLENECK_FACTOR = 4

    def __init__(self, in_channels, n, growth, *, rng):
        self.in_channels = _positive(in_channels, "in_channels")
        if int(n) != n or n < 0:
            raise ConfigError(f"repetition count must be >= 0, got {n}")
        self.n = int(n)
        self.growth = _positive(growth, "growth") if self.n else int(growth)
        self.reps = []
        channels = self.in_channels
        for _ in range(self.n):
            squeeze = Conv2D(
                channels, self.BOTTLENECK_FACTOR * self.growth, 1, 1, 0, "relu", rng=rng
            )
            grow = Conv2D(
                self.BOTTLENECK_FACTOR * self.growth, self.growth, 3, 1, 1, "relu",
                rng=rng,
            )
            self.reps.append((squeeze, grow))
            channels += self.growth
        self._widths = None

    @property
    def out_channels(self):
        return self.in_channels + self.n * self.growth

    def _children(self):
        items = []
        for i, (squeeze, grow) in enumerate(self.reps):
            items.append((f"rep{i}.squeeze", squeeze))
            items.append((f"rep{i}.grow", grow))
        return items

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"dense block expects [B, {self.in_channels}, H, W], got {x.shape}"
            )
        features = [x]
        for squeeze, grow in self.reps:
            joined = np.concatenate(features, axis=1)
            features.append(
                grow.forward(squeeze.forward(joined, training, rng), training, rng)
            )
        self._widths = [f.shape[1] for f in features]
        if self.n == 0:
            return x.copy()
        return np.concatenate(features, axis=1)

    def backward(self, grad):
        widths = self._need(self._widths)
        if self.n == 0:
            return grad
        edges = np.cumsum([0] + widths)
        acc = [grad[:, edges[i]:edges[i + 1]].copy() for i in range(len(widths))]
        for i in range(self.n, 0, -1):
            squeeze, grow = self.reps[i - 1]
            dinput = squeeze.backward(grow.backward(acc[i]))
            inner = np.cumsum([0] + widths[:i])
            for j in range(i):
                acc[j] += dinput[:, inner[j]:inner[j + 1]]
        return acc[0]


class Network(Layer):
    """A straight-line stack of layers ending in a SoftmaxHead."""

    kind = "network"

    def __init__(self, layers, input_shape, seed, config=None, class_names=None):
        if not layers or not isinstance(layers[-1], SoftmaxHead):
            raise ConfigError("a network must end with a softmax head")
        for layer in layers[:-1]:
            if isinstance(layer, SoftmaxHead):
                raise ConfigError("softmax head must be the terminal layer")
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.seed = seed
        self.config = config
        self.class_names = list(class_names) if class_names else None

    @property
    def classes(self):
        return self.layers[-1].classes

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(
                f"network expects [B, {', '.join(map(str, self.input_shape))}], "
                f"got {x.shape}"
            )
        for layer in self.layers:
            x = layer.forward(x, training, rng)
        return x

    def backward(self, output_grad=None, logits_grad=None):
        """Backprop from the output; returns the gradient at the input.

        Exactly one of `output_grad` (gradient at the probabilities) and
        `logits_grad` (gradient already at the softmax logits) is given.
        """
        if (output_grad is None) == (logits_grad is None):
            raise ConfigError("pass exactly one of output_grad / logits_grad")
        head = self.layers[-1]
        if logits_grad is not None:
            grad = head.backward_logits(logits_grad)
        else:
            grad = head.backward(output_grad)
        for layer in reversed(self.layers[:-1]):
            grad = layer.backward(grad)
        return grad

    def param_items(self):
        items = []
        for i, layer in enumerate(self.layers):
            items.extend(
                (f"{i}.{layer.kind}.{name}", array)
                for name, array in layer.param_items()
            )
        return items

    def grad_items(self):
        items = []
        for i, layer in enumerate(self.layers):
            items.extend(
                (f"{i}.{layer.kind}.{name}", array)
                for name, array in layer.grad_items()
            )
        return items

    def grad_set(self):
        """Name -> gradient mapping from the most recent backward."""
        return dict(self.grad_items())

    def parameter_count(self):
        return int(sum(p.size for p in self.params()))

    def get_weights(self):
        return [p.copy() for p in self.params()]

    def set_weights(self, weights):
        params = self.params()
        if len(weights) != len(params):
            raise ShapeError(
                f"{len(weights)} tensors for {len(params)} parameters"
            )
        for p, w in zip(params, weights):
            if p.shape != w.shape:
                raise ShapeError(f"shape mismatch: {p.shape} vs {w.shape}")
            np.copyto(p, w)
