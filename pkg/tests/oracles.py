"""Independent oracles the tests compare against.

Everything here is deliberately naive (scalar math, explicit loops, set
counting) and never touches the tape, so a bug in the library cannot hide in
its own checker.
"""

from __future__ import annotations

import math

import numpy as np


def spe_scalar(pos: int, dim: int, channels: int, base: float = 10000.0) -> float:
    """Scalar sinusoidal encoding entry via the standard library."""
    angle = pos / base ** (dim / channels)
    return math.sin(angle) if dim % 2 == 0 else math.cos(angle)


def gelu_scalar(x: float) -> float:
    return 0.5 * x * (1.0 + math.erf(x / math.sqrt(2.0)))


def sigmoid_scalar(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def dam_straight_line(m: np.ndarray, w1, b1, w2, b2, use_gap: bool, use_spe: bool,
                      dim: int = 0, activation: str = "gelu") -> np.ndarray:
    """Straight-line recomputation of the recalibration, element by element.

    pooled[k] = mean of channel k; encoding[k] = sin/cos(k / 10000^(dim/C));
    scale = sigmoid(mlp(pooled) + mlp(encoding)); out[k] = scale[k] * m[k].
    """
    c, h, w = m.shape
    pooled = np.zeros(c)
    if use_gap:
        for k in range(c):
            total = 0.0
            for i in range(h):
                for j in range(w):
                    total += m[k, i, j]
            pooled[k] = total / (h * w)
    encoding = np.zeros(c)
    if use_spe:
        for k in range(c):
            encoding[k] = spe_scalar(k, dim, c)

    def mlp(vec):
        hidden = w1.shape[0]
        mid = np.zeros(hidden)
        for a in range(hidden):
            acc = b1[a]
            for k in range(c):
                acc += w1[a, k] * vec[k]
            mid[a] = gelu_scalar(acc) if activation == "gelu" else acc
        out = np.zeros(c)
        for k in range(c):
            acc = b2[k]
            for a in range(hidden):
                acc += w2[k, a] * mid[a]
            out[k] = acc
        return out

    fused = mlp(pooled) + mlp(encoding)
    scale = np.array([sigmoid_scalar(v) for v in fused])
    out = np.empty_like(m)
    for k in range(c):
        out[k] = scale[k] * m[k]
    return out


def iou_set_counting(gt: np.ndarray, pred: np.ndarray, k: int, ignore: int = 255) -> float | None:
    """IoU of class k by counting index sets; None when undefined."""
    scored = [i for i in range(len(gt)) if gt[i] != ignore and pred[i] != ignore]
    gt_set = {i for i in scored if gt[i] == k}
    pred_set = {i for i in scored if pred[i] == k}
    union = gt_set | pred_set
    if not union:
        return None
    return len(gt_set & pred_set) / len(union)


def miou_set_counting(gt: np.ndarray, pred: np.ndarray, num_classes: int, ignore: int = 255) -> float | None:
    values = []
    for k in range(num_classes):
        iou = iou_set_counting(gt, pred, k, ignore)
        if iou is not None:
            values.append(iou)
    return sum(values) / len(values) if values else None


def cosine_distance_double_loop(m: np.ndarray) -> float:
    """Naive pairwise (1 - cos)/2 mean over all ordered channel pairs."""
    c = m.shape[0]
    flat = [m[k].reshape(-1).astype(np.float64) for k in range(c)]
    total = 0.0
    for i in range(c):
        for j in range(c):
            ni = math.sqrt(float(np.dot(flat[i], flat[i])))
            nj = math.sqrt(float(np.dot(flat[j], flat[j])))
            if ni == 0.0 or nj == 0.0:
                cos = 0.0
            else:
                cos = float(np.dot(flat[i], flat[j])) / (ni * nj)
            total += (1.0 - cos) / 2.0
    return total / (c * c)
