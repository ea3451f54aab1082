"""ConvNeXt-style blocks, stage assembly, and the 2-stage toy model.

A plain block computes x + layer_scale * pw2(GELU(pw1(LN(dw7(x))))); the
depth-aware variant drops the layer scale and recalibrates the expanded
features right after GELU.  ``build_stages`` realizes the placement policies
(all blocks, the last two per stage, or only the last per stage).

The toy model stacks a pointwise stem, the assembled stages with a 2x2
space-to-depth + pointwise reduction between them, and a pointwise logit head
whose output is nearest-upsampled back to the input resolution.  The
reduction is a functioning stand-in, not a faithful reproduction of any
published stem/downsampling design.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dam import DamParams, init_dam_params, dam_forward
from .errors import FormatError, ShapeError, ValidationError

EXPANSION = 4
LAYER_SCALE_INIT = 1e-6
CHECKPOINT_MAGIC = b"FMV3"
CHECKPOINT_VERSION = 1

PLAIN = "plain"
DEPTH_AWARE = "depth_aware"
PLACEMENTS = ("all", "last_two", "last_one")


@dataclass(frozen=True)
class BlockSpec:
    channels: int
    kind: str = PLAIN
    expansion: int = EXPANSION

    def __post_init__(self):
        if self.channels < 1:
            raise ValidationError(f"channels must be >= 1, got {self.channels}")
        if self.kind not in (PLAIN, DEPTH_AWARE):
            raise ValidationError(f"kind must be '{PLAIN}' or '{DEPTH_AWARE}', got {self.kind!r}")


@dataclass(frozen=True)
class StageSpec:
    depths: tuple[int, ...]
    placement: str = "last_one"

    def __post_init__(self):
        object.__setattr__(self, "depths", tuple(int(d) for d in self.depths))
        if any(d < 1 for d in self.depths):
            raise ValidationError(f"every stage depth must be >= 1, got {self.depths}")
        if self.placement not in PLACEMENTS:
            raise ValidationError(f"placement must be one of {PLACEMENTS}, got {self.placement!r}")


def build_stages(spec: StageSpec, channels: tuple[int, ...]) -> list[list[BlockSpec]]:
    """Block kinds per stage under the placement policy (clamped to the depth)."""
    if len(channels) != len(spec.depths):
        raise ValidationError(f"{len(spec.depths)} depths but {len(channels)} channel counts")
    replaced = {"all": None, "last_two": 2, "last_one": 1}[spec.placement]
    stages = []
    for depth, c in zip(spec.depths, channels):
        n_aware = depth if replaced is None else min(replaced, depth)
        kinds = [PLAIN] * (depth - n_aware) + [DEPTH_AWARE] * n_aware
        stages.append([BlockSpec(channels=c, kind=kind) for kind in kinds])
    return stages


@dataclass(frozen=True)
class BlockParams:
    """Learned tensors of one block; layer_scale and dam are mutually exclusive."""

    spec: BlockSpec
    dw_kernel: Tensor
    dw_bias: Tensor
    ln_gamma: Tensor
    ln_beta: Tensor
    pw1_w: Tensor
    pw1_b: Tensor
    pw2_w: Tensor
    pw2_b: Tensor
    layer_scale: Tensor | None = None
    dam: DamParams | None = None

    def tensors(self) -> list[tuple[str, Tensor]]:
        named = [
            ("dw_kernel", self.dw_kernel),
            ("dw_bias", self.dw_bias),
            ("ln_gamma", self.ln_gamma),
            ("ln_beta", self.ln_beta),
            ("pw1_w", self.pw1_w),
            ("pw1_b", self.pw1_b),
            ("pw2_w", self.pw2_w),
            ("pw2_b", self.pw2_b),
        ]
        if self.layer_scale is not None:
            named.append(("layer_scale", self.layer_scale))
        if self.dam is not None:
            named.extend((f"dam.{k}", t) for k, t in self.dam.tensors())
        return named


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


def init_block_params(
    spec: BlockSpec,
    rng: np.random.Generator,
    use_gap: bool = True,
    use_spe: bool = True,
    spe_dim: int = 0,
) -> BlockParams:
    c = spec.channels
    wide = c * spec.expansion
    dam = None
    layer_scale = None
    if spec.kind == DEPTH_AWARE:
        dam = init_dam_params(wide, rng, use_gap=use_gap, use_spe=use_spe, dim=spe_dim)
    else:
        layer_scale = ad.parameter(np.full(c, LAYER_SCALE_INIT))
    return BlockParams(
        spec=spec,
        dw_kernel=ad.parameter(_uniform(rng, 49, (c, 7, 7))),
        dw_bias=ad.parameter(np.zeros(c)),
        ln_gamma=ad.parameter(np.ones(c)),
        ln_beta=ad.parameter(np.zeros(c)),
        pw1_w=ad.parameter(_uniform(rng, c, (wide, c))),
        pw1_b=ad.parameter(np.zeros(wide)),
        pw2_w=ad.parameter(_uniform(rng, wide, (c, wide))),
        pw2_b=ad.parameter(np.zeros(c)),
        layer_scale=layer_scale,
        dam=dam,
    )


def block_forward(x, params: BlockParams) -> Tensor:
    """Residual block; the depth-aware kind recalibrates after GELU and has no layer scale."""
    x = ad.as_tensor(x)
    if x.ndim != 3 or x.shape[0] != params.spec.channels:
        raise ShapeError(f"input must be ({params.spec.channels}, H, W), got {x.shape}")
    h = ad.add(ad.depthwise_conv7(x, params.dw_kernel), params.dw_bias)
    h = ad.layer_norm(h, params.ln_gamma, params.ln_beta)
    h = ad.gelu(ad.pointwise_conv(h, params.pw1_w, params.pw1_b))
    if params.dam is not None:
        h = dam_forward(h, params.dam)
    h = ad.pointwise_conv(h, params.pw2_w, params.pw2_b)
    if params.layer_scale is not None:
        h = ad.mul(h, params.layer_scale)
    return ad.add(x, h)


def param_count(obj) -> int:
    """Exact learned-parameter tally of a model, block, params object, or list of them."""
    if hasattr(obj, "named_parameters"):
        return int(sum(t.data.size for _, t in obj.named_parameters()))
    if hasattr(obj, "tensors"):
        return int(sum(t.data.size for _, t in obj.tensors()))
    if isinstance(obj, Tensor):
        return int(obj.data.size)
    if isinstance(obj, (list, tuple)):
        return int(sum(param_count(item) for item in obj))
    raise TypeError(f"cannot count parameters of {type(obj).__name__}")


class ToyModel:
    """2+-stage segmentation network: stem -> stages (downsampled between) -> logit head."""

    def __init__(
        self,
        in_channels: int = 5,
        num_classes: int = 3,
        stage_channels: tuple[int, ...] = (8, 16),
        depths: tuple[int, ...] = (2, 2),
        placement: str = "last_one",
        use_gap: bool = True,
        use_spe: bool = True,
        spe_dim: int = 0,
        seed: int = 0,
    ):
        if len(stage_channels) != len(depths):
            raise ValidationError(f"{len(depths)} depths but {len(stage_channels)} channel counts")
        self.in_channels = in_channels
        self.num_classes = num_classes
        self.stage_channels = tuple(stage_channels)
        self.spec = StageSpec(depths=tuple(depths), placement=placement)
        rng = np.random.default_rng(seed)
        self.stem_w = ad.parameter(_uniform(rng, in_channels, (stage_channels[0], in_channels)))
        self.stem_b = ad.parameter(np.zeros(stage_channels[0]))
        self.stages: list[list[BlockParams]] = [
            [
                init_block_params(bs, rng, use_gap=use_gap, use_spe=use_spe, spe_dim=spe_dim)
                for bs in stage
            ]
            for stage in build_stages(self.spec, self.stage_channels)
        ]
        self.downsamples: list[tuple[Tensor, Tensor]] = []
        for prev_c, next_c in zip(stage_channels[:-1], stage_channels[1:]):
            w = ad.parameter(_uniform(rng, 4 * prev_c, (next_c, 4 * prev_c)))
            b = ad.parameter(np.zeros(next_c))
            self.downsamples.append((w, b))
        last_c = stage_channels[-1]
        self.head_w = ad.parameter(_uniform(rng, last_c, (num_classes, last_c)))
        self.head_b = ad.parameter(np.zeros(num_classes))

    def forward(self, x) -> Tensor:
        """(C_in, H, W) -> per-pixel class logits (num_classes, H, W)."""
        x = ad.as_tensor(x)
        if x.ndim != 3 or x.shape[0] != self.in_channels:
            raise ShapeError(f"input must be ({self.in_channels}, H, W), got {x.shape}")
        h = ad.pointwise_conv(x, self.stem_w, self.stem_b)
        for i, stage in enumerate(self.stages):
            if i > 0:
                w, b = self.downsamples[i - 1]
                h = ad.pointwise_conv(ad.space_to_depth2(h), w, b)
            for block in stage:
                h = block_forward(h, block)
        logits = ad.pointwise_conv(h, self.head_w, self.head_b)
        for _ in range(len(self.stages) - 1):
            logits = ad.upsample_nearest2(logits)
        return logits

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named = [("stem.w", self.stem_w), ("stem.b", self.stem_b)]
        for si, stage in enumerate(self.stages):
            for bi, block in enumerate(stage):
                named.extend((f"stage{si}.block{bi}.{k}", t) for k, t in block.tensors())
        for di, (w, b) in enumerate(self.downsamples):
            named.extend([(f"down{di}.w", w), (f"down{di}.b", b)])
        named.extend([("head.w", self.head_w), ("head.b", self.head_b)])
        return named

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        named = dict(self.named_parameters())
        missing = set(named) - set(state)
        if missing:
            raise ValidationError(f"checkpoint is missing tensors: {sorted(missing)}")
        for name, tensor in named.items():
            arr = np.asarray(state[name], dtype=tensor.data.dtype)
            if arr.shape != tensor.data.shape:
                raise ShapeError(f"{name}: checkpoint shape {arr.shape} != model {tensor.data.shape}")
            tensor.data = arr


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Flat binary checkpoint: magic, version, count, then named float32 tensors."""
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f4")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = 12
    tensors: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            name = raw[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            dims = struct.unpack_from(f"<{rank}I", raw, offset)
            offset += 4 * rank
            size = int(np.prod(dims, dtype=np.int64)) if rank else 1
            data = np.frombuffer(raw, dtype="<f4", count=size, offset=offset)
            offset += 4 * size
            tensors[name] = data.reshape(dims).copy()
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: truncated checkpoint") from exc
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return tensors
