"""Model spec text: parsing, validation, rendering, instantiation.

The format is line-oriented; tokens are whitespace-separated and `#` starts
a comment. The first directive must be `input`, the last must be `softmax`,
and softmax appears exactly once. An optional `name` line may precede
`input`.

    name <identifier>                        (optional)
    input <channels> <resolution>
    conv <filters> <kernel> <stride> <pad> <activation>
    maxpool <window> <stride>
    avgpool <window> <stride>
    globalavgpool
    flatten
    dense <units> <activation>
    dropout <p>
    inception <b1> <b3r> <b3> <b5r> <b5> <pp>
    residual <channels>
    denseblock <n> <growth>
    softmax <classes>

Kernels and pool windows must fit their (padded) inputs and conv kernels
must be odd. The whole chain is shape-checked at parse time, so a config
that parses always instantiates, and parse(render(config)) == config.
"""

from dataclasses import dataclass

from .activations import ACTIVATION_NAMES
from .errors import ConfigError, ModelSpecError
from .layers import (
    AvgPool2D,
    Conv2D,
    Dense,
    DenseNetBlock,
    Dropout,
    Flatten,
    GlobalAvgPool,
    InceptionBlock,
    MaxPool2D,
    Network,
    ResidualBlock,
    SoftmaxHead,
)
from .seeding import seeded_rng

MODEL_SPEC_SUFFIX = ".gknet"


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    args: tuple


@dataclass(frozen=True)
class ModelConfig:
    name: str
    channels: int
    resolution: int
    layers: tuple  # of LayerSpec, softmax last

    @property
    def classes(self):
        return self.layers[-1].args[0]


def _int_arg(token, label, line):
    try:
        value = int(token)
    except ValueError:
        raise ModelSpecError(f"{label} must be an integer, got {token!r}", line)
    return value


def _float_arg(token, label, line):
    try:
        return float(token)
    except ValueError:
        raise ModelSpecError(f"{label} must be a number, got {token!r}", line)


def _positive_arg(token, label, line):
    value = _int_arg(token, label, line)
    if value < 1:
        raise ModelSpecError(f"{label} must be >= 1, got {value}", line)
    return value


def _activation_arg(token, line):
    if token not in ACTIVATION_NAMES:
        raise ModelSpecError(
            f"unknown activation {token!r}; choose from {', '.join(ACTIVATION_NAMES)}",
            line,
        )
    return token


def _arity(kind, args, want, line):
    if len(args) != want:
        raise ModelSpecError(
            f"{kind} takes {want} argument{'s' if want != 1 else ''}, got {len(args)}",
            line,
        )


class _Chain:
    """Tracks the shape flowing through the stack during validation."""

    def __init__(self, channels, resolution):
        self.image = (channels, resolution, resolution)
        self.flat = None

    def need_image(self, kind, line):
        if self.image is None:
            raise ModelSpecError(
                f"{kind} needs an image input, but the data is flat here", line
            )
        return self.image

    def need_flat(self, kind, line):
        if self.flat is None:
            raise ModelSpecError(
                f"{kind} needs flat features; add flatten or globalavgpool first",
                line,
            )
        return self.flat

    def to_flat(self, n):
        self.image = None
        self.flat = n


def _slide(size, k, stride, pad, what, line):
    padded = size + 2 * pad
    if k > padded:
        raise ModelSpecError(
            f"{what} {k} exceeds padded input extent {padded}", line
        )
    return (padded - k) // stride + 1


def parse_model_spec(text, default_name="model"):
    """Parse and shape-check spec text into a ModelConfig."""
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        tokens = stripped.split()
        entries.append((lineno, tokens[0], tokens[1:]))
    if not entries:
        raise ModelSpecError("empty model spec")

    name = default_name
    if entries[0][1] == "name":
        line, _, args = entries[0]
        _arity("name", args, 1, line)
        name = args[0]
        entries = entries[1:]
        if not entries:
            raise ModelSpecError("model spec has a name but no layers")

    line, kind, args = entries[0]
    if kind != "input":
        raise ModelSpecError("first directive must be 'input <channels> <resolution>'", line)
    _arity("input", args, 2, line)
    channels = _positive_arg(args[0], "channels", line)
    resolution = _positive_arg(args[1], "resolution", line)
    if channels not in (1, 3):
        raise ModelSpecError(f"channels must be 1 or 3, got {channels}", line)

    chain = _Chain(channels, resolution)
    layers = []
    saw_softmax = False
    for line, kind, args in entries[1:]:
        if saw_softmax:
            raise ModelSpecError("softmax must be the final layer", line)
        if kind == "input":
            raise ModelSpecError("duplicate input directive", line)
        if kind == "conv":
            _arity(kind, args, 5, line)
            filters = _positive_arg(args[0], "filters", line)
            k = _positive_arg(args[1], "kernel", line)
            stride = _positive_arg(args[2], "stride", line)
            pad = _int_arg(args[3], "pad", line)
            act = _activation_arg(args[4], line)
            if k % 2 == 0:
                raise ModelSpecError(f"kernel must be odd, got {k}", line)
            if pad < 0:
                raise ModelSpecError(f"pad must be >= 0, got {pad}", line)
            c, h, w = chain.need_image(kind, line)
            ho = _slide(h, k, stride, pad, "kernel", line)
            wo = _slide(w, k, stride, pad, "kernel", line)
            chain.image = (filters, ho, wo)
            layers.append(LayerSpec("conv", (filters, k, stride, pad, act)))
        elif kind in ("maxpool", "avgpool"):
            _arity(kind, args, 2, line)
            window = _positive_arg(args[0], "window", line)
            stride = _positive_arg(args[1], "stride", line)
            c, h, w = chain.need_image(kind, line)
            ho = _slide(h, window, stride, 0, "pool window", line)
            wo = _slide(w, window, stride, 0, "pool window", line)
            chain.image = (c, ho, wo)
            layers.append(LayerSpec(kind, (window, stride)))
        elif kind == "globalavgpool":
            _arity(kind, args, 0, line)
            c, _, _ = chain.need_image(kind, line)
            chain.to_flat(c)
            layers.append(LayerSpec(kind, ()))
        elif kind == "flatten":
            _arity(kind, args, 0, line)
            c, h, w = chain.need_image(kind, line)
            chain.to_flat(c * h * w)
            layers.append(LayerSpec(kind, ()))
        elif kind == "dense":
            _arity(kind, args, 2, line)
            units = _positive_arg(args[0], "units", line)
            act = _activation_arg(args[1], line)
            chain.need_flat(kind, line)
            chain.flat = units
            layers.append(LayerSpec(kind, (units, act)))
        elif kind == "dropout":
            _arity(kind, args, 1, line)
            p = _float_arg(args[0], "rate", line)
            if not 0.0 <= p < 1.0:
                raise ModelSpecError(f"dropout rate must be in [0, 1), got {p}", line)
            layers.append(LayerSpec(kind, (p,)))
        elif kind == "inception":
            _arity(kind, args, 6, line)
            widths = tuple(
                _positive_arg(a, label, line)
                for a, label in zip(args, ("b1", "b3r", "b3", "b5r", "b5", "pp"))
            )
            c, h, w = chain.need_image(kind, line)
            chain.image = (widths[0] + widths[2] + widths[4] + widths[5], h, w)
            layers.append(LayerSpec(kind, widths))
        elif kind == "residual":
            _arity(kind, args, 1, line)
            want = _positive_arg(args[0], "channels", line)
            c, h, w = chain.need_image(kind, line)
            if c != want:
                raise ModelSpecError(
                    f"residual declares {want} channels but input has {c}", line
                )
            layers.append(LayerSpec(kind, (want,)))
        elif kind == "denseblock":
            _arity(kind, args, 2, line)
            n = _int_arg(args[0], "repetitions", line)
            growth = _positive_arg(args[1], "growth", line)
            if n < 0:
                raise ModelSpecError(f"repetitions must be >= 0, got {n}", line)
            c, h, w = chain.need_image(kind, line)
            chain.image = (c + n * growth, h, w)
            layers.append(LayerSpec(kind, (n, growth)))
        elif kind == "softmax":
            _arity(kind, args, 1, line)
            classes = _positive_arg(args[0], "classes", line)
            chain.need_flat(kind, line)
            layers.append(LayerSpec(kind, (classes,)))
            saw_softmax = True
        else:
            raise ModelSpecError(f"unknown directive {kind!r}", line)

    if not saw_softmax:
        raise ModelSpecError("model spec must end with 'softmax <classes>'")
    return ModelConfig(
        name=name,
        channels=channels,
        resolution=resolution,
        layers=tuple(layers),
    )


def render_model_spec(config):
    """Canonical text for a ModelConfig; parses back to an equal config."""
    lines = [f"name {config.name}", f"input {config.channels} {config.resolution}"]
    for spec in config.layers:
        if spec.args:
            rendered = " ".join(
                repr(a) if isinstance(a, float) else str(a) for a in spec.args
            )
            lines.append(f"{spec.kind} {rendered}")
        else:
            lines.append(spec.kind)
    return "\n".join(lines) + "\n"


def instantiate(config, seed):
    """Build a Network with freshly initialized weights.

    All weight draws come from one generator keyed by `seed` alone, in layer
    order, so a (config, seed) pair always yields identical parameters.
    """
    rng = seeded_rng(seed)
    chain = _Chain(config.channels, config.resolution)
    layers = []
    for spec in config.layers:
        kind, args = spec.kind, spec.args
        if kind == "conv":
            filters, k, stride, pad, act = args
            c, h, w = chain.image
            layer = Conv2D(c, filters, k, stride, pad, act, rng=rng)
            chain.image = layer.output_shape((c, h, w))
        elif kind == "maxpool":
            layer = MaxPool2D(*args)
            chain.image = layer.output_shape(chain.image)
        elif kind == "avgpool":
            layer = AvgPool2D(*args)
            chain.image = layer.output_shape(chain.image)
        elif kind == "globalavgpool":
            layer = GlobalAvgPool()
            chain.to_flat(chain.image[0])
        elif kind == "flatten":
            c, h, w = chain.image
            layer = Flatten()
            chain.to_flat(c * h * w)
        elif kind == "dense":
            units, act = args
            layer = Dense(chain.flat, units, act, rng=rng)
            chain.flat = units
        elif kind == "dropout":
            layer = Dropout(args[0])
        elif kind == "inception":
            c, h, w = chain.image
            layer = InceptionBlock(c, *args, rng=rng)
            chain.image = (layer.out_channels, h, w)
        elif kind == "residual":
            layer = ResidualBlock(args[0], rng=rng)
        elif kind == "denseblock":
            c, h, w = chain.image
            layer = DenseNetBlock(c, *args, rng=rng)
            chain.image = (layer.out_channels, h, w)
        elif kind == "softmax":
            layer = SoftmaxHead(chain.flat, args[0], rng=rng)
        else:
            raise ConfigError(f"unknown layer kind {kind!r}")
        layers.append(layer)
    input_shape = (config.channels, config.resolution, config.resolution)
    return Network(layers, input_shape, seed, config=config)


_PRESET_TEMPLATES = {
    "mini-inception": """
        name mini-inception
        input {channels} {resolution}
        conv 8 7 2 3 relu
        maxpool 2 2
        inception 4 4 8 2 4 4
        maxpool 2 2
        inception 8 4 12 2 6 6
        globalavgpool
        softmax {classes}
    """,
    "mini-resnet": """
        name mini-resnet
        input {channels} {resolution}
        conv 12 7 2 3 relu
        maxpool 2 2
        residual 12
        maxpool 2 2
        residual 12
        residual 12
        globalavgpool
        softmax {classes}
    """,
    "mini-densenet": """
        name mini-densenet
        input {channels} {resolution}
        conv 8 7 2 3 relu
        maxpool 2 2
        denseblock 2 6
        conv 10 1 1 0 relu
        avgpool 2 2
        denseblock 2 6
        globalavgpool
        softmax {classes}
    """,
}

PRESET_NAMES = tuple(sorted(_PRESET_TEMPLATES))


def builtin_presets(classes=3, channels=1, resolution=64):
    """The three built-in mini architectures, parameterized and parsed."""
    presets = {}
    for name, template in _PRESET_TEMPLATES.items():
        text = template.format(
            channels=channels, resolution=resolution, classes=classes
        )
        presets[name] = parse_model_spec(text, default_name=name)
    return presets


def preset_config(name, classes=3, channels=1, resolution=64):
    presets = builtin_presets(classes, channels, resolution)
    if name not in presets:
        raise ConfigError(
            f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}"
        )
    return presets[name]
