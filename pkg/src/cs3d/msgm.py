"""Numeric reference for a multi-scale gated merge of BEV feature maps.

Three parallel convolutions (1x1, 3x3, 5x5, zero-padded to keep H x W) see
the same input; a tiny gating MLP on the globally pooled input emits one
softmax weight per scale, and the output is the weighted sum of the three
branches. Everything is plain numpy forward math: feature maps are (C, H, W)
float arrays, no training, no autograd.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KERNEL_SIZES = (1, 3, 5)

_MIN_HIDDEN = 4


def _check_feature_map(x: np.ndarray, name: str = "feature map") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 3 or min(x.shape) < 1:
        raise ValueError(f"{name} must be (C, H, W) with positive dims")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite")
    return x


def conv2d_same(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Zero-padded same-size cross-correlation.

    ``x`` is (C_in, H, W), ``kernel`` (C_out, C_in, k, k) with odd k, and
    ``bias`` (C_out,). No kernel flip: weights are applied in the
    cross-correlation orientation used by every deep-learning framework.
    """
    x = _check_feature_map(x, "input")
    kernel = np.asarray(kernel, dtype=float)
    bias = np.asarray(bias, dtype=float)
    if kernel.ndim != 4 or kernel.shape[2] != kernel.shape[3]:
        raise ValueError("kernel must be (C_out, C_in, k, k)")
    k = kernel.shape[2]
    if k % 2 != 1:
        raise ValueError("kernel size must be odd")
    if kernel.shape[1] != x.shape[0]:
        raise ValueError("kernel input channels do not match feature map")
    if bias.shape != (kernel.shape[0],):
        raise ValueError("bias must be (C_out,)")
    pad = (k - 1) // 2
    padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (k, k), axis=(1, 2))  # (C, H, W, k, k)
    return np.einsum("chwij,ocij->ohw", windows, kernel) + bias[:, None, None]


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Mean over the spatial dimensions: (C, H, W) -> (C,)."""
    return _check_feature_map(x).mean(axis=(1, 2))


def hidden_width(channels: int) -> int:
    """Gating MLP hidden width: half the channel count, at least 4."""
    if channels < 1:
        raise ValueError("channels must be >= 1")
    return max(_MIN_HIDDEN, math.ceil(channels / 2))


@dataclass
class MsgmParams:
    """Weights for the three conv branches and the gating MLP.

    kernels maps kernel size to (C_out, C_in, k, k); all branches must share
    C_out. The MLP is w1 (hidden, C_in), b1 (hidden,), w2 (3, hidden),
    b2 (3,): exactly one logit per scale.
    """

    kernels: dict[int, np.ndarray]
    biases: dict[int, np.ndarray]
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        if sorted(self.kernels) != list(KERNEL_SIZES) or sorted(self.biases) != list(
            KERNEL_SIZES
        ):
            raise ValueError(f"kernels and biases must cover sizes {KERNEL_SIZES}")
        self.kernels = {k: np.asarray(v, dtype=float) for k, v in self.kernels.items()}
        self.biases = {k: np.asarray(v, dtype=float) for k, v in self.biases.items()}
        out_channels = {self.kernels[k].shape[0] for k in KERNEL_SIZES}
        in_channels = {self.kernels[k].shape[1] for k in KERNEL_SIZES}
        if len(out_channels) != 1 or len(in_channels) != 1:
            raise ValueError("branches must share input and output channel counts")
        for k in KERNEL_SIZES:
            if self.kernels[k].shape[2:] != (k, k):
                raise ValueError(f"kernel for size {k} must be (*, *, {k}, {k})")
        self.w1 = np.asarray(self.w1, dtype=float)
        self.b1 = np.asarray(self.b1, dtype=float)
        self.w2 = np.asarray(self.w2, dtype=float)
        self.b2 = np.asarray(self.b2, dtype=float)
        hidden = self.w1.shape[0]
        c_in = next(iter(in_channels))
        if self.w1.shape != (hidden, c_in) or self.b1.shape != (hidden,):
            raise ValueError("w1/b1 shapes must be (hidden, C_in) and (hidden,)")
        if self.w2.shape != (len(KERNEL_SIZES), hidden) or self.b2.shape != (
            len(KERNEL_SIZES),
        ):
            raise ValueError("w2/b2 must emit exactly one logit per scale")

    @property
    def in_channels(self) -> int:
        return self.kernels[1].shape[1]

    @property
    def out_channels(self) -> int:
        return self.kernels[1].shape[0]

    @staticmethod
    def random(
        in_channels: int,
        out_channels: int,
        seed: int | None = None,
        scale: float = 0.1,
    ) -> "MsgmParams":
        """Small random parameters, reproducible from ``seed``."""
        rng = np.random.default_rng(seed)
        hidden = hidden_width(in_channels)
        kernels = {
            k: rng.normal(0.0, scale, (out_channels, in_channels, k, k))
            for k in KERNEL_SIZES
        }
        biases = {k: rng.normal(0.0, scale, out_channels) for k in KERNEL_SIZES}
        return MsgmParams(
            kernels=kernels,
            biases=biases,
            w1=rng.normal(0.0, scale, (hidden, in_channels)),
            b1=rng.normal(0.0, scale, hidden),
            w2=rng.normal(0.0, scale, (len(KERNEL_SIZES), hidden)),
            b2=rng.normal(0.0, scale, len(KERNEL_SIZES)),
        )

    def to_tensors(self) -> dict[str, np.ndarray]:
        """Flatten to named arrays for the tensor-file container."""
        out: dict[str, np.ndarray] = {}
        for k in KERNEL_SIZES:
            out[f"conv{k}/kernel"] = self.kernels[k]
            out[f"conv{k}/bias"] = self.biases[k]
        out["gate/w1"] = self.w1
        out["gate/b1"] = self.b1
        out["gate/w2"] = self.w2
        out["gate/b2"] = self.b2
        return out

    @staticmethod
    def from_tensors(tensors: dict[str, np.ndarray]) -> "MsgmParams":
        try:
            return MsgmParams(
                kernels={k: tensors[f"conv{k}/kernel"] for k in KERNEL_SIZES},
                biases={k: tensors[f"conv{k}/bias"] for k in KERNEL_SIZES},
                w1=tensors["gate/w1"],
                b1=tensors["gate/b1"],
                w2=tensors["gate/w2"],
                b2=tensors["gate/b2"],
            )
        except KeyError as exc:
            raise ValueError(f"missing parameter tensor {exc.args[0]!r}") from exc


def gate_weights(x: np.ndarray, params: MsgmParams) -> np.ndarray:
    """Softmax scale weights from the globally pooled input: shape (3,).

    relu(w1 @ pooled + b1) feeds a linear layer with one logit per scale;
    the softmax is max-shifted, so the weights are finite, positive, and sum
    to one for any finite input.
    """
    pooled = global_avg_pool(x)
    if pooled.shape[0] != params.in_channels:
        raise ValueError("feature map channels do not match parameters")
    hidden = np.maximum(params.w1 @ pooled + params.b1, 0.0)
    logits = params.w2 @ hidden + params.b2
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


def msgm_forward(x: np.ndarray, params: MsgmParams) -> np.ndarray:
    """Gated multi-scale merge: weighted sum of the three conv branches.

    Output shape is (C_out, H, W). Branches are combined as
    w1*F1 + w3*F3 + w5*F5, so a saturated (one-hot) gate reproduces the
    winning branch exactly.
    """
    x = _check_feature_map(x, "input")
    branches = [conv2d_same(x, params.kernels[k], params.biases[k]) for k in KERNEL_SIZES]
    w = gate_weights(x, params)
    return w[0] * branches[0] + w[1] * branches[1] + w[2] * branches[2]
