"""Synthetic depth-ordered scenes for the toy training harness.

Each scene is a 5-channel 16 x 64 range image: a smooth ground sweep whose
range grows with the row index, plus 1-4 rectangular objects painted at
depths drawn from two disjoint bands.  Objects from the near band are class
1, from the far band class 2, ground is class 0 -- so telling near from far
requires reading the depth ordering, not shape or intensity (both are drawn
independently of the class).  The x, y, z channels follow the spherical model
from the per-pixel angles, so r is always the Euclidean norm of (x, y, z).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .io import RangeImage
from .projection import FieldOfView, backproject, pixel_angles

HEIGHT = 16
WIDTH = 64
CLASS_GROUND, CLASS_NEAR, CLASS_FAR = 0, 1, 2
NUM_CLASSES = 3
NEAR_BAND = (4.0, 9.0)
FAR_BAND = (13.0, 28.0)
GROUND_RANGE = (2.0, 32.0)
SCENE_FOV = FieldOfView(lvfov=-2.0, hvfov=22.0, lhfov=0.0, hhfov=360.0)

# Fixed scale applied to the metric channels before they enter a model.
DEPTH_SCALE = 30.0


@dataclass(frozen=True)
class SyntheticScene:
    image: RangeImage
    labels: np.ndarray
    seed: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (self.image.height, self.image.width):
            raise ValidationError(
                f"labels shaped {labels.shape} do not match the image "
                f"({self.image.height}, {self.image.width})"
            )
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    def model_input(self) -> np.ndarray:
        """Scaled float image ready for a model forward pass."""
        scaled = self.image.data.astype(np.float64)
        scaled[:4] /= DEPTH_SCALE
        return scaled


def _render(seed: int) -> SyntheticScene:
    rng = np.random.default_rng(seed)
    geom = pixel_angles(SCENE_FOV, HEIGHT, WIDTH)

    lo, hi = GROUND_RANGE
    rows = np.arange(HEIGHT, dtype=np.float64)
    base = lo + (hi - lo) * rows / (HEIGHT - 1)
    wobble = rng.uniform(0.95, 1.05, size=HEIGHT)
    r = np.broadcast_to((base * wobble)[:, None], (HEIGHT, WIDTH)).copy()
    r += rng.uniform(-0.05, 0.05, size=(HEIGHT, WIDTH))
    intensity = rng.uniform(0.05, 0.25, size=(HEIGHT, WIDTH))
    labels = np.full((HEIGHT, WIDTH), CLASS_GROUND, dtype=np.int64)

    for _ in range(int(rng.integers(1, 5))):
        cls = CLASS_NEAR if rng.random() < 0.5 else CLASS_FAR
        band = NEAR_BAND if cls == CLASS_NEAR else FAR_BAND
        h = int(rng.integers(3, 9))
        w = int(rng.integers(6, 21))
        r0 = int(rng.integers(0, HEIGHT - h + 1))
        c0 = int(rng.integers(0, WIDTH - w + 1))
        depth = rng.uniform(band[0] + 0.3, band[1] - 0.3)
        jitter = rng.uniform(-0.25, 0.25, size=(h, w))
        r[r0 : r0 + h, c0 : c0 + w] = depth + jitter
        intensity[r0 : r0 + h, c0 : c0 + w] = rng.uniform(0.2, 1.0)
        labels[r0 : r0 + h, c0 : c0 + w] = cls

    xyz = backproject(r, geom.alpha[:, None], geom.theta[None, :])
    data = np.stack([xyz[..., 0], xyz[..., 1], xyz[..., 2], r, intensity])
    image = RangeImage(
        data=data,
        valid=np.ones((HEIGHT, WIDTH), dtype=bool),
        lut=np.zeros((0, 2), dtype=np.int64),
    )
    return SyntheticScene(image=image, labels=labels, seed=seed)


def generate(seed: int, n: int) -> list[SyntheticScene]:
    """Deterministic list of ``n`` scenes derived from a master seed."""
    if n < 1:
        raise ValidationError(f"need n >= 1 scenes, got {n}")
    master = np.random.default_rng(seed)
    scene_seeds = [int(s) for s in master.integers(0, 2**63 - 1, size=n)]
    return [_render(s) for s in scene_seeds]
