"""Depth-aware channel recalibration.

The module turns a feature map M (C x H x W) into s * M where the per-channel
scale s fuses two summaries through one shared two-layer MLP:

    g = global average pool of M          (per-channel context)
    z = sinusoidal encoding over channels (fixed, no gradient)
    s = sigmoid(MLP(g) + MLP(z))

Either summary can be ablated: without the pooled branch the scale is the
same for every input image; without the positional branch the module behaves
like a squeeze-and-excitation block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DegeneratePoolError, ShapeError, ValidationError

SPE_BASE = 10000.0


@dataclass(frozen=True)
class SpeConfig:
    """Sinusoidal positional encoding over channel positions.

    ``dim`` picks the wavelength (base ** (dim / channels)) and, through its
    parity, whether the sinusoid is a sine (even) or cosine (odd).  The
    ``alternating`` parity variant instead alternates sin/cos by the parity of
    the channel index itself, at the same wavelength; it exists for study and
    is not the default.
    """

    channels: int
    dim: int = 0
    base: float = SPE_BASE
    parity: str = "fixed"

    def __post_init__(self):
        if self.channels < 1:
            raise ValidationError(f"channels must be >= 1, got {self.channels}")
        if not 0 <= self.dim < self.channels:
            raise ValidationError(f"dim must be in [0, {self.channels}), got {self.dim}")
        if self.parity not in ("fixed", "alternating"):
            raise ValidationError(f"parity must be 'fixed' or 'alternating', got {self.parity!r}")


def spe_vector(cfg: SpeConfig) -> np.ndarray:
    """Encoding vector z with z[pos] = sin(pos / base**(dim/C)) (cos for odd dim)."""
    positions = np.arange(cfg.channels, dtype=np.float64)
    angles = positions / cfg.base ** (cfg.dim / cfg.channels)
    if cfg.parity == "fixed":
        return np.sin(angles) if cfg.dim % 2 == 0 else np.cos(angles)
    out = np.sin(angles)
    out[1::2] = np.cos(angles[1::2])
    return out


@dataclass(frozen=True)
class DamParams:
    """Shared-MLP weights plus the ablation flags and encoding configuration.

    The same (w1, b1, w2, b2) apply to both the pooled and the positional
    branch.  ``spe_cached`` holds the precomputed encoding; it depends only on
    the configuration and carries no gradient.
    """

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    spe: SpeConfig
    use_gap: bool = True
    use_spe: bool = True
    activation: str = "gelu"
    spe_cached: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        c = self.spe.channels
        hidden = self.w1.shape[0]
        if hidden < 1:
            raise ValidationError("hidden width must be >= 1")
        if self.w1.shape != (hidden, c) or self.b1.shape != (hidden,):
            raise ShapeError(f"w1/b1 shaped {self.w1.shape}/{self.b1.shape} for C={c}")
        if self.w2.shape != (c, hidden) or self.b2.shape != (c,):
            raise ShapeError(f"w2/b2 shaped {self.w2.shape}/{self.b2.shape} for C={c}")
        if self.activation not in ("gelu", "identity"):
            raise ValidationError(f"activation must be 'gelu' or 'identity', got {self.activation!r}")
        if self.spe_cached is None:
            cached = spe_vector(self.spe)
            cached.flags.writeable = False
            object.__setattr__(self, "spe_cached", cached)

    @property
    def channels(self) -> int:
        return self.spe.channels

    def tensors(self) -> list[tuple[str, Tensor]]:
        return [("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2)]


def init_dam_params(
    channels: int,
    rng: np.random.Generator,
    hidden: int | None = None,
    use_gap: bool = True,
    use_spe: bool = True,
    dim: int = 0,
    activation: str = "gelu",
    parity: str = "fixed",
) -> DamParams:
    """Seeded init: weights uniform in +-1/sqrt(fan_in), biases zero, hidden = C/4."""
    if hidden is None:
        hidden = max(1, channels // 4)
    bound1 = 1.0 / np.sqrt(channels)
    bound2 = 1.0 / np.sqrt(hidden)
    return DamParams(
        w1=ad.parameter(rng.uniform(-bound1, bound1, (hidden, channels))),
        b1=ad.parameter(np.zeros(hidden)),
        w2=ad.parameter(rng.uniform(-bound2, bound2, (channels, hidden))),
        b2=ad.parameter(np.zeros(channels)),
        spe=SpeConfig(channels=channels, dim=dim, parity=parity),
        use_gap=use_gap,
        use_spe=use_spe,
        activation=activation,
    )


def _mlp(x: Tensor, p: DamParams) -> Tensor:
    h = ad.add(ad.matmul(p.w1, x), p.b1)
    if p.activation == "gelu":
        h = ad.gelu(h)
    return ad.add(ad.matmul(p.w2, h), p.b2)


def dam_scale(g, z, p: DamParams) -> Tensor:
    """Fuse the two channel summaries into a scale in (0, 1)^C."""
    g, z = ad.as_tensor(g), ad.as_tensor(z)
    if g.shape != (p.channels,) or z.shape != (p.channels,):
        raise ShapeError(f"summaries must be ({p.channels},), got {g.shape} and {z.shape}")
    return ad.sigmoid(ad.add(_mlp(g, p), _mlp(z, p)))


def scale_for_map(m, p: DamParams) -> Tensor:
    """The channel scale dam_forward applies to a given (C, H, W) feature map."""
    m = ad.as_tensor(m)
    if m.ndim != 3 or m.shape[0] != p.channels:
        raise ShapeError(f"feature map must be ({p.channels}, H, W), got {m.shape}")
    if p.use_gap:
        g = ad.global_avg_pool(m)
    else:
        if m.shape[1] * m.shape[2] == 0:
            raise DegeneratePoolError("feature map has an empty spatial extent")
        g = ad.constant(np.zeros(p.channels, dtype=m.data.dtype))
    if p.use_spe:
        z = ad.constant(p.spe_cached.astype(m.data.dtype))
    else:
        z = ad.constant(np.zeros(p.channels, dtype=m.data.dtype))
    return dam_scale(g, z, p)


def dam_forward(m, p: DamParams) -> Tensor:
    """Recalibrate a (C, H, W) feature map by its depth-aware channel scale."""
    m = ad.as_tensor(m)
    return ad.scale_broadcast(m, scale_for_map(m, p))
