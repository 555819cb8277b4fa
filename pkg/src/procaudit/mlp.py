"""Two-hidden-layer perceptron with inverted dropout and a softmax head.

Layout::

    x -> dense(H) -> act -> dropout(d) -> dense(H) -> act -> dropout(d) -> dense(C) -> softmax

Everything works on row batches: a single sample is a batch of one.
"""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core import NumericError, ShapeError, batch_cross_entropy, softmax
from .normalize import NormalizationStats, StatsFormatError

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")
MODEL_FORMAT = "procaudit-model"
MODEL_VERSION = 1

ACTIVATIONS = ("relu", "tanh")


class UsageError(RuntimeError):
    """Raised when operations are called out of order (e.g. backward without a cache)."""


class ModelFormatError(ValueError):
    """Model container is corrupt, truncated or of an unknown version."""


class ModelContractError(ValueError):
    """Model is incompatible with the requested prediction task."""


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int = 8
    hidden_dim: int = 512
    dropout_ratio: float = 0.2
    output_classes: int = 2
    seed: int = 0
    activation: str = "relu"

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ValueError("layer dimensions must be positive")
        if self.output_classes < 2:
            raise ValueError("need at least two output classes")
        if not 0.0 <= self.dropout_ratio < 1.0:
            raise ValueError(f"dropout ratio must be in [0, 1), got {self.dropout_ratio}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def shapes(self) -> dict[str, tuple[int, ...]]:
        i, h, c = self.input_dim, self.hidden_dim, self.output_classes
        return {"W1": (i, h), "b1": (h,), "W2": (h, h), "b2": (h,), "W3": (h, c), "b3": (c,)}


@dataclass
class NetworkParameters:
    config: NetworkConfig
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "NetworkParameters":
        return NetworkParameters(self.config, **{k: v.copy() for k, v in self.arrays().items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays().values()])

    @classmethod
    def from_arrays(cls, config: NetworkConfig, arrays: dict) -> "NetworkParameters":
        shapes = config.shapes()
        checked = {}
        for name in PARAM_NAMES:
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != shapes[name]:
                raise ShapeError(f"{name} has shape {arr.shape}, expected {shapes[name]}")
            checked[name] = arr
        return cls(config, **checked)


@dataclass
class ForwardCache:
    """Intermediate activations kept by a train-mode forward pass."""

    params: NetworkParameters
    x: np.ndarray
    z1: np.ndarray
    mask1: np.ndarray
    h1: np.ndarray
    z2: np.ndarray
    mask2: np.ndarray
    h2: np.ndarray
    probs: np.ndarray


def init_params(config: NetworkConfig) -> NetworkParameters:
    """Uniform fan-in/fan-out initialisation, zero biases, seeded by ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    arrays = {}
    for name, shape in config.shapes().items():
        if name.startswith("W"):
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            arrays[name] = rng.uniform(-limit, limit, size=shape)
        else:
            arrays[name] = np.zeros(shape)
    return NetworkParameters(config, **arrays)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0).astype(np.float64)
    return 1.0 - np.tanh(z) ** 2


def _dropout_mask(shape, ratio: float, rng: np.random.Generator) -> np.ndarray:
    if ratio == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= ratio
    return keep / (1.0 - ratio)


def _checked(arr: np.ndarray, layer: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite activation in layer {layer}")
    return arr


def _run(params: NetworkParameters, x: np.ndarray, train: bool,
         rng: Optional[np.random.Generator]) -> ForwardCache:
    cfg = params.config
    d = cfg.dropout_ratio if train else 0.0
    if d > 0.0 and rng is None:
        raise UsageError("train mode with dropout needs an rng")
    z1 = _checked(x @ params.W1 + params.b1, "dense1")
    m1 = _dropout_mask(z1.shape, d, rng)
    h1 = _activate(z1, cfg.activation) * m1
    z2 = _checked(h1 @ params.W2 + params.b2, "dense2")
    m2 = _dropout_mask(z2.shape, d, rng)
    h2 = _activate(z2, cfg.activation) * m2
    logits = _checked(h2 @ params.W3 + params.b3, "output")
    return ForwardCache(params, x, z1, m1, h1, z2, m2, h2, softmax(logits))


def _as_batch(params: NetworkParameters, features) -> tuple[np.ndarray, bool]:
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.config.input_dim:
        raise ShapeError(f"expected {params.config.input_dim} features per row, got shape {x.shape}")
    return x, single


def forward(params: NetworkParameters, features, mode: str = "infer",
            rng: Optional[np.random.Generator] = None):
    """Run the network on a batch (or a single feature vector).

    In ``"infer"`` mode returns the class probabilities. In ``"train"`` mode
    returns ``(probs, cache)``; dropout masks are drawn from ``rng`` and
    survivors are scaled by ``1 / (1 - d)``.
    """
    if mode not in ("infer", "train"):
        raise ValueError(f"mode must be 'infer' or 'train', got {mode!r}")
    x, single = _as_batch(params, features)
    cache = _run(params, x, mode == "train", rng)
    probs = cache.probs[0] if single else cache.probs
    if mode == "infer":
        return probs
    return probs, cache


def hidden_activations(params: NetworkParameters, features, mode: str = "infer",
                       rng: Optional[np.random.Generator] = None, layer: int = 1) -> np.ndarray:
    """Output of hidden ``layer`` (1 or 2) after dropout, one row per input."""
    if layer not in (1, 2):
        raise ValueError("layer must be 1 or 2")
    x, _ = _as_batch(params, features)
    cache = _run(params, x, mode == "train", rng)
    return cache.h1 if layer == 1 else cache.h2


def backward(params: NetworkParameters, cache: Optional[ForwardCache], targets) -> dict[str, np.ndarray]:
    """Gradients of the batch-mean cross-entropy with respect to every parameter.

    ``cache`` must come from a train-mode forward on these same ``params``.
    The realised dropout masks are honoured.
    """
    if cache is None:
        raise UsageError("backward called without a forward cache")
    if cache.params is not params:
        raise UsageError("forward cache belongs to a different parameter set")
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    n = cache.x.shape[0]
    if targets.shape[0] != n:
        raise ShapeError(f"{targets.shape[0]} targets for a batch of {n}")
    kind = params.config.activation

    dlogits = cache.probs.copy()
    dlogits[np.arange(n), targets] -= 1.0
    dlogits /= n

    gW3 = cache.h2.T @ dlogits
    gb3 = dlogits.sum(axis=0)
    dh2 = dlogits @ params.W3.T
    dz2 = dh2 * cache.mask2 * _activation_grad(cache.z2, kind)
    gW2 = cache.h1.T @ dz2
    gb2 = dz2.sum(axis=0)
    dh1 = dz2 @ params.W2.T
    dz1 = dh1 * cache.mask1 * _activation_grad(cache.z1, kind)
    gW1 = cache.x.T @ dz1
    gb1 = dz1.sum(axis=0)
    return {"W1": gW1, "b1": gb1, "W2": gW2, "b2": gb2, "W3": gW3, "b3": gb3}


def batch_loss(params: NetworkParameters, features, targets) -> float:
    """Mean cross-entropy in infer mode (no dropout)."""
    probs = np.atleast_2d(forward(params, features, "infer"))
    return float(batch_cross_entropy(probs, np.atleast_1d(targets)).mean())


def sgd_step(params: NetworkParameters, gradients: dict, learning_rate: float) -> NetworkParameters:
    """Return ``p - lr * g`` for every parameter array."""
    if not learning_rate > 0:
        raise ValueError("learning rate must be positive")
    updated = {}
    for name, p in params.arrays().items():
        new = p - learning_rate * gradients[name]
        if not np.all(np.isfinite(new)):
            raise NumericError(f"non-finite update for {name}")
        updated[name] = new
    return NetworkParameters(params.config, **updated)


@dataclass
class RMSProp:
    """Adaptive per-parameter step: divides by a running RMS of past gradients."""

    decay: float = 0.9
    eps: float = 1e-8
    state: dict = field(default_factory=dict)

    def step(self, params: NetworkParameters, gradients: dict, learning_rate: float) -> NetworkParameters:
        if not learning_rate > 0:
            raise ValueError("learning rate must be positive")
        updated = {}
        for name, p in params.arrays().items():
            g = gradients[name]
            ms = self.state.get(name)
            ms = (1.0 - self.decay) * g * g if ms is None else self.decay * ms + (1.0 - self.decay) * g * g
            self.state[name] = ms
            new = p - learning_rate * g / (np.sqrt(ms) + self.eps)
            if not np.all(np.isfinite(new)):
                raise NumericError(f"non-finite update for {name}")
            updated[name] = new
        return NetworkParameters(params.config, **updated)


class SGD:
    def step(self, params, gradients, learning_rate):
        return sgd_step(params, gradients, learning_rate)


def make_optimizer(name: str):
    if name == "sgd":
        return SGD()
    if name == "rmsprop":
        return RMSProp()
    raise ValueError(f"unknown optimizer {name!r}")


# --- model container -------------------------------------------------------

@dataclass
class Model:
    params: NetworkParameters
    stats: Optional[NormalizationStats]
    task: str = "binary"

    @property
    def config(self) -> NetworkConfig:
        return self.params.config

    def require_classes(self, expected: int) -> None:
        got = self.config.output_classes
        if got != expected:
            raise ModelContractError(f"model predicts {got} classes, caller expects {expected}")

    def predict_proba(self, features, expected_classes: Optional[int] = None) -> np.ndarray:
        if expected_classes is not None:
            self.require_classes(expected_classes)
        return forward(self.params, features, "infer")


def save_model(model: Model, dest) -> None:
    """Write config, normalisation stats and weights into one ``.npz`` container.

    ``dest`` is a path or a binary file object. The archive holds the six
    parameter arrays plus a ``header`` entry: UTF-8 JSON with the format name,
    version, config, task, expected array shapes and the stats text.
    """
    cfg = model.config
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "task": model.task,
        "config": asdict(cfg),
        "shapes": {k: list(v) for k, v in cfg.shapes().items()},
        "stats": model.stats.dumps() if model.stats is not None else None,
    }
    blob = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    np.savez(dest, header=blob, **model.params.arrays())


def load_model(source) -> Model:
    try:
        with np.load(source, allow_pickle=False) as archive:
            if "header" not in archive.files:
                raise ModelFormatError("model file has no header")
            header = json.loads(archive["header"].tobytes().decode("utf-8"))
            arrays = {name: archive[name] for name in PARAM_NAMES}
    except ModelFormatError:
        raise
    except (OSError, ValueError, KeyError, EOFError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"cannot read model container: {exc}") from exc
    except Exception as exc:  # zipfile.BadZipFile and friends
        raise ModelFormatError(f"cannot read model container: {exc}") from exc

    if header.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"not a model file (format={header.get('format')!r})")
    if header.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {header.get('version')!r}")
    try:
        config = NetworkConfig(**header["config"])
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"bad config in model header: {exc}") from exc
    declared = {k: tuple(v) for k, v in header.get("shapes", {}).items()}
    if declared != config.shapes():
        raise ModelFormatError(f"header shapes {declared} disagree with config {config.shapes()}")
    try:
        params = NetworkParameters.from_arrays(config, arrays)
    except ShapeError as exc:
        raise ModelFormatError(str(exc)) from exc
    stats = None
    if header.get("stats") is not None:
        try:
            stats = NormalizationStats.loads(header["stats"])
        except StatsFormatError as exc:
            raise ModelFormatError(f"embedded stats: {exc}") from exc
    return Model(params, stats, header.get("task", "binary"))


def model_bytes(model: Model) -> bytes:
    buf = io.BytesIO()
    save_model(model, buf)
    return buf.getvalue()
