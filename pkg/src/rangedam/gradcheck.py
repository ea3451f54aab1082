"""Central finite-difference verification of the tape gradients.

``gradient_check`` runs one analytic backward pass and compares it against
central differences (f(x + eps e) - f(x - eps e)) / (2 eps) computed by plain
forward evaluations that never touch the tape.  Errors are reported as
|a - b| / max(|a|, |b|, 1): relative where gradients are O(1) or larger,
absolute below that.

``run_suite`` checks every differentiable op plus the composed recalibration
module, both block kinds, and a small 2-stage model.  Primitive ops get every
coordinate perturbed; the composites perturb a seeded random subset of
coordinates per run so that many seeds stay within a CPU-minutes budget.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .blocks import BlockSpec, ToyModel, block_forward, init_block_params
from .config import precision
from .dam import dam_forward, init_dam_params

DEFAULT_EPS = 1e-5
DEFAULT_TOL = 1e-4


def error_between(analytic, numeric) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    diff = np.abs(analytic - numeric) / scale
    return float(diff.max()) if diff.size else 0.0


def gradient_check(
    run: Callable[[], Tensor],
    tensors: list[Tensor],
    eps: float = DEFAULT_EPS,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max elementwise error between tape and finite-difference gradients.

    ``run`` evaluates a scalar loss from the current ``.data`` of the given
    tensors; the harness perturbs that data in place for the numeric side and
    restores it afterwards.  With ``max_coords`` set, at most that many
    coordinates per tensor are perturbed (chosen by ``rng``).
    """
    with precision("verify"):
        bases = [t.data.astype(np.float64) for t in tensors]
        for t, base in zip(tensors, bases):
            t.data = base
            t.requires_grad = True
            t.grad = None
        with Tape() as tape:
            loss = run()
            tape.backward(loss)
        analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

        worst = 0.0
        try:
            for idx, base in enumerate(bases):
                flat_indices = np.arange(base.size)
                if max_coords is not None and base.size > max_coords:
                    picker = rng if rng is not None else np.random.default_rng()
                    flat_indices = picker.choice(base.size, size=max_coords, replace=False)
                for flat in flat_indices:
                    coord = np.unravel_index(flat, base.shape) if base.shape else ()
                    original = base[coord] if base.shape else float(base)
                    perturbed = base.copy()
                    perturbed[coord] = original + eps
                    tensors[idx].data = perturbed
                    f_plus = run().item()
                    perturbed = base.copy()
                    perturbed[coord] = original - eps
                    tensors[idx].data = perturbed
                    f_minus = run().item()
                    tensors[idx].data = base
                    numeric = (f_plus - f_minus) / (2.0 * eps)
                    a = analytic[idx][coord] if base.shape else float(analytic[idx])
                    worst = max(worst, error_between(a, numeric))
        finally:
            for t, base in zip(tensors, bases):
                t.data = base
                t.grad = None
        return worst


def _projection(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, shape)


@dataclass(frozen=True)
class OpCheck:
    name: str
    build: Callable[[np.random.Generator], tuple[list[Tensor], Callable[[], Tensor]]]
    max_coords: int | None = None


def _t(rng, *shape) -> Tensor:
    return Tensor(rng.normal(size=shape), requires_grad=True, dtype=np.float64)


def _build_add(rng):
    c, h, w = rng.integers(1, 5), rng.integers(1, 6), rng.integers(1, 6)
    m, v = _t(rng, c, h, w), _t(rng, c)
    r = _projection(rng, (c, h, w))
    return [m, v], lambda: ad.weighted_sum(ad.add(m, v), r)


def _build_mul(rng):
    c, h, w = rng.integers(1, 5), rng.integers(1, 6), rng.integers(1, 6)
    a, b = _t(rng, c, h, w), _t(rng, c, h, w)
    r = _projection(rng, (c, h, w))
    return [a, b], lambda: ad.weighted_sum(ad.mul(a, b), r)


def _build_mul_channel(rng):
    c, h, w = rng.integers(1, 5), rng.integers(1, 6), rng.integers(1, 6)
    a, b = _t(rng, c, h, w), _t(rng, c)
    r = _projection(rng, (c, h, w))
    return [a, b], lambda: ad.weighted_sum(ad.mul(a, b), r)


def _build_scale_broadcast(rng):
    c, h, w = rng.integers(1, 6), rng.integers(1, 6), rng.integers(1, 6)
    m, s = _t(rng, c, h, w), _t(rng, c)
    r = _projection(rng, (c, h, w))
    return [m, s], lambda: ad.weighted_sum(ad.scale_broadcast(m, s), r)


def _build_matmul(rng):
    m, n, p = rng.integers(1, 6), rng.integers(1, 6), rng.integers(1, 5)
    a, b = _t(rng, m, n), _t(rng, n, p)
    r = _projection(rng, (m, p))
    return [a, b], lambda: ad.weighted_sum(ad.matmul(a, b), r)


def _build_matvec(rng):
    m, n = rng.integers(1, 6), rng.integers(1, 6)
    a, b = _t(rng, m, n), _t(rng, n)
    r = _projection(rng, (m,))
    return [a, b], lambda: ad.weighted_sum(ad.matmul(a, b), r)


def _build_depthwise(rng):
    c, h, w = rng.integers(1, 3), rng.integers(2, 6), rng.integers(2, 6)
    m, k = _t(rng, c, h, w), _t(rng, c, 7, 7)
    r = _projection(rng, (c, h, w))
    return [m, k], lambda: ad.weighted_sum(ad.depthwise_conv7(m, k), r)


def _build_pointwise(rng):
    c, d, h, w = rng.integers(1, 5), rng.integers(1, 5), rng.integers(1, 5), rng.integers(1, 5)
    m, wt, b = _t(rng, c, h, w), _t(rng, d, c), _t(rng, d)
    r = _projection(rng, (d, h, w))
    return [m, wt, b], lambda: ad.weighted_sum(ad.pointwise_conv(m, wt, b), r)


def _build_gelu(rng):
    x = _t(rng, rng.integers(1, 5), rng.integers(1, 6), rng.integers(1, 6))
    r = _projection(rng, x.shape)
    return [x], lambda: ad.weighted_sum(ad.gelu(x), r)


def _build_sigmoid(rng):
    x = _t(rng, rng.integers(1, 5), rng.integers(1, 6), rng.integers(1, 6))
    r = _projection(rng, x.shape)
    return [x], lambda: ad.weighted_sum(ad.sigmoid(x), r)


def _build_layer_norm(rng):
    c, h, w = rng.integers(2, 6), rng.integers(1, 5), rng.integers(1, 5)
    m, gamma, beta = _t(rng, c, h, w), _t(rng, c), _t(rng, c)
    r = _projection(rng, (c, h, w))
    return [m, gamma, beta], lambda: ad.weighted_sum(ad.layer_norm(m, gamma, beta), r)


def _build_gap(rng):
    c, h, w = rng.integers(1, 6), rng.integers(1, 6), rng.integers(1, 6)
    m = _t(rng, c, h, w)
    r = _projection(rng, c)
    return [m], lambda: ad.weighted_sum(ad.global_avg_pool(m), r)


def _build_softmax_ce(rng):
    k = int(rng.integers(2, 8))
    logits = _t(rng, k)
    target = int(rng.integers(0, k))
    return [logits], lambda: ad.softmax_cross_entropy(logits, target)


def _build_pixelwise_ce(rng):
    k, h, w = int(rng.integers(2, 5)), rng.integers(1, 5), rng.integers(1, 5)
    logits = _t(rng, k, h, w)
    targets = rng.integers(0, k, size=(h, w))
    return [logits], lambda: ad.pixelwise_cross_entropy(logits, targets)


def _build_scalar_mul(rng):
    x = _t(rng, rng.integers(1, 5), rng.integers(1, 5), rng.integers(1, 5))
    factor = float(rng.uniform(-2.0, 2.0))
    r = _projection(rng, x.shape)
    return [x], lambda: ad.weighted_sum(ad.scalar_mul(x, factor), r)


def _build_space_to_depth(rng):
    c, h, w = rng.integers(1, 4), 2 * rng.integers(1, 4), 2 * rng.integers(1, 4)
    m = _t(rng, c, h, w)
    r = _projection(rng, (4 * c, h // 2, w // 2))
    return [m], lambda: ad.weighted_sum(ad.space_to_depth2(m), r)


def _build_upsample(rng):
    c, h, w = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 4)
    m = _t(rng, c, h, w)
    r = _projection(rng, (c, 2 * h, 2 * w))
    return [m], lambda: ad.weighted_sum(ad.upsample_nearest2(m), r)


def _build_dam(rng):
    c = int(rng.integers(2, 7))
    h, w = rng.integers(1, 5), rng.integers(1, 5)
    params = init_dam_params(c, rng)
    m = _t(rng, c, h, w)
    tensors = [m] + [t for _, t in params.tensors()]
    r = _projection(rng, (c, h, w))
    return tensors, lambda: ad.weighted_sum(dam_forward(m, params), r)


def _build_block(kind: str):
    def build(rng):
        c = int(rng.integers(2, 5))
        h, w = rng.integers(2, 5), rng.integers(2, 5)
        params = init_block_params(BlockSpec(channels=c, kind=kind), rng)
        m = _t(rng, c, h, w)
        tensors = [m] + [t for _, t in params.tensors()]
        r = _projection(rng, (c, h, w))
        return tensors, lambda: ad.weighted_sum(block_forward(m, params), r)

    return build


def _build_toy_model(rng):
    model = ToyModel(
        in_channels=3,
        num_classes=3,
        stage_channels=(4, 8),
        depths=(1, 1),
        seed=int(rng.integers(0, 2**31)),
    )
    x = _t(rng, 3, 8, 8)
    targets = rng.integers(0, 3, size=(8, 8))
    tensors = [x] + model.parameters()
    return tensors, lambda: ad.pixelwise_cross_entropy(model.forward(x), targets)


SUITE: list[OpCheck] = [
    OpCheck("add", _build_add),
    OpCheck("mul", _build_mul),
    OpCheck("mul_channel", _build_mul_channel),
    OpCheck("scale_broadcast", _build_scale_broadcast),
    OpCheck("matmul", _build_matmul),
    OpCheck("matmul_vec", _build_matvec),
    OpCheck("depthwise_conv7", _build_depthwise),
    OpCheck("pointwise_conv", _build_pointwise),
    OpCheck("gelu", _build_gelu),
    OpCheck("sigmoid", _build_sigmoid),
    OpCheck("layer_norm", _build_layer_norm),
    OpCheck("global_avg_pool", _build_gap),
    OpCheck("softmax_cross_entropy", _build_softmax_ce),
    OpCheck("pixelwise_cross_entropy", _build_pixelwise_ce),
    OpCheck("scalar_mul", _build_scalar_mul),
    OpCheck("space_to_depth2", _build_space_to_depth),
    OpCheck("upsample_nearest2", _build_upsample),
    OpCheck("dam_forward", _build_dam, max_coords=12),
    OpCheck("block_forward_plain", _build_block("plain"), max_coords=8),
    OpCheck("block_forward_depth_aware", _build_block("depth_aware"), max_coords=8),
    OpCheck("toy_model_2stage", _build_toy_model, max_coords=4),
]


def run_suite(
    seeds: int = 10,
    eps: float = DEFAULT_EPS,
    base_seed: int = 0,
    only: list[str] | None = None,
) -> dict[str, float]:
    """Max error per check over ``seeds`` independently seeded runs."""
    results: dict[str, float] = {}
    for check in SUITE:
        if only is not None and check.name not in only:
            continue
        stable = zlib.crc32(check.name.encode())
        worst = 0.0
        for i in range(seeds):
            rng = np.random.default_rng([base_seed, stable, i])
            tensors, run = check.build(rng)
            worst = max(
                worst,
                gradient_check(run, tensors, eps=eps, max_coords=check.max_coords, rng=rng),
            )
        results[check.name] = worst
    return results
