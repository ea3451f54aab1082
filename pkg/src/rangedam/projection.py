"""Point-cloud to range-image projection and back.

Columns come from the full-quadrant azimuth (scan unfolding: u = floor(theta /
360 * W), clamped), rows are the beam/ring index.  When a cloud carries no
ring field, rings are inferred by counting azimuth wrap-arounds in firing
order.  The spherical model maps (r, alpha, theta) back to Cartesian
coordinates, with per-pixel angles derived linearly from a field of view.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, DegeneratePointError, RingInferenceError, ValidationError
from .io import FILL_VALUE, PointCloud, RangeImage, validate_point_image


@dataclass(frozen=True)
class FieldOfView:
    """Vertical and horizontal field of view in degrees (lowest < highest)."""

    lvfov: float
    hvfov: float
    lhfov: float
    hhfov: float

    def __post_init__(self):
        if not self.lvfov < self.hvfov:
            raise ValidationError(f"lvfov {self.lvfov} must be < hvfov {self.hvfov}")
        if not self.lhfov < self.hhfov:
            raise ValidationError(f"lhfov {self.lhfov} must be < hhfov {self.hhfov}")


@dataclass(frozen=True)
class ProjectionGeometry:
    """Per-pixel vertical (alpha, one per row) and horizontal (theta, one per column) angles."""

    width: int
    height: int
    alpha: np.ndarray
    theta: np.ndarray


def compute_azimuth(x, y):
    """Full-quadrant azimuth of (x, y) in degrees, in [0, 360).

    Negative angles from the two-argument arctangent are folded by +360 so a
    full sweep indexes a full image row.  Accepts scalars or arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any((x == 0.0) & (y == 0.0)):
        raise DegeneratePointError("azimuth undefined at x = y = 0")
    theta = np.degrees(np.arctan2(y, x))
    theta = np.where(theta < 0.0, theta + 360.0, theta)
    # atan2(-eps, x>0) + 360 rounds to exactly 360.0; keep the codomain open.
    theta = np.where(theta >= 360.0, 0.0, theta)
    if theta.ndim == 0:
        return float(theta)
    return theta


def scan_unfold(cloud: PointCloud, width: int) -> np.ndarray:
    """Per-point integer (u, v) coordinates: u from azimuth, v from the ring index."""
    if cloud.ring is None:
        raise ValidationError("scan_unfold requires a cloud with ring indices")
    if width < 1:
        raise ValidationError(f"width must be >= 1, got {width}")
    n = len(cloud)
    uv = np.empty((n, 2), dtype=np.int64)
    if n:
        theta = compute_azimuth(cloud.xyz[:, 0], cloud.xyz[:, 1])
        u = np.floor(np.asarray(theta) / 360.0 * width).astype(np.int64)
        uv[:, 0] = np.minimum(u, width - 1)
        uv[:, 1] = cloud.ring
    return uv


def rasterize(cloud: PointCloud, uv: np.ndarray, height: int, width: int) -> RangeImage:
    """Scatter points onto the grid; colliding points resolve to the nearest (smallest r).

    Every pixel that received at least one point carries the winning point's
    (x, y, z, r, intensity); empty pixels hold the fill value.  The LUT keeps
    the (u, v) of every input point, losers included.
    """
    uv = np.asarray(uv, dtype=np.int64)
    n = len(cloud)
    if uv.shape != (n, 2):
        raise ValidationError(f"uv must be ({n}, 2), got {uv.shape}")
    if n:
        u, v = uv[:, 0], uv[:, 1]
        if u.min() < 0 or v.min() < 0 or u.max() >= width or v.max() >= height:
            raise BoundsError("uv coordinates fall outside the image")

    data = np.full((5, height, width), FILL_VALUE, dtype=np.float64)
    valid = np.zeros((height, width), dtype=bool)
    if n:
        xyz = cloud.xyz.astype(np.float64, copy=False)
        r = np.sqrt(np.einsum("ij,ij->i", xyz, xyz))
        pix = uv[:, 1] * width + uv[:, 0]
        winners = _nearest_per_pixel(pix, r, xyz, cloud.intensity, height * width)
        pu, pv = uv[winners, 0], uv[winners, 1]
        data[0, pv, pu] = xyz[winners, 0]
        data[1, pv, pu] = xyz[winners, 1]
        data[2, pv, pu] = xyz[winners, 2]
        data[3, pv, pu] = r[winners]
        data[4, pv, pu] = cloud.intensity[winners]
        valid[pv, pu] = True
    img = RangeImage(data=data, valid=valid, lut=uv)
    validate_point_image(img)
    return img


def _nearest_per_pixel(pix, r, xyz, intensity, n_pixels) -> np.ndarray:
    """Index of the winning point per occupied pixel, independent of input order.

    Minimum range wins; exact range ties break on (x, y, z, intensity) so the
    result is a pure function of the point set.
    """
    best = np.full(n_pixels, np.inf)
    np.minimum.at(best, pix, r)
    candidates = np.flatnonzero(r == best[pix])
    counts = np.bincount(pix[candidates], minlength=n_pixels)
    if counts.max() <= 1:
        return candidates
    tied = counts[pix[candidates]] > 1
    winners = [candidates[~tied]]
    tied_idx = candidates[tied]
    order = np.lexsort(
        (intensity[tied_idx], xyz[tied_idx, 2], xyz[tied_idx, 1], xyz[tied_idx, 0], pix[tied_idx])
    )
    tied_sorted = tied_idx[order]
    first = np.ones(tied_sorted.shape[0], dtype=bool)
    first[1:] = pix[tied_sorted][1:] != pix[tied_sorted][:-1]
    winners.append(tied_sorted[first])
    return np.concatenate(winners)


def infer_rings(cloud: PointCloud, height: int) -> np.ndarray:
    """Recover beam indices from firing order by counting azimuth wrap-arounds.

    A jump of more than 180 degrees between consecutive points cannot occur
    inside a sweep, so it marks the start of the next ring.  Raises when more
    than ``height`` rings are detected.
    """
    if height < 1:
        raise ValidationError(f"height must be >= 1, got {height}")
    n = len(cloud)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    theta = np.asarray(compute_azimuth(cloud.xyz[:, 0], cloud.xyz[:, 1]))
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    wraps = np.abs(np.diff(theta)) > 180.0
    rings = np.concatenate(([0], np.cumsum(wraps))).astype(np.int64)
    if rings[-1] >= height:
        raise RingInferenceError(f"detected {int(rings[-1]) + 1} rings but height is {height}")
    return rings


def pixel_angles(fov: FieldOfView, height: int, width: int) -> ProjectionGeometry:
    """Linear per-row alpha and per-column theta for a field of view.

    alpha(row) = (hvfov - lvfov) / H * row - lvfov
    theta(col) = (hhfov - lhfov) / W * col - lhfov
    """
    if height < 1 or width < 1:
        raise ValidationError(f"height and width must be >= 1, got {height}x{width}")
    rows = np.arange(height, dtype=np.float64)
    cols = np.arange(width, dtype=np.float64)
    alpha = (fov.hvfov - fov.lvfov) / height * rows - fov.lvfov
    theta = (fov.hhfov - fov.lhfov) / width * cols - fov.lhfov
    return ProjectionGeometry(width=width, height=height, alpha=alpha, theta=theta)


def backproject(r, alpha_deg, theta_deg):
    """Spherical model: (r, alpha, theta) -> (x, y, z).

    x = r cos(alpha) cos(theta), y = r cos(alpha) sin(theta), z = r sin(alpha).
    Accepts scalars or broadcastable arrays; returns stacked (..., 3).
    """
    r = np.asarray(r, dtype=np.float64)
    alpha = np.radians(np.asarray(alpha_deg, dtype=np.float64))
    theta = np.radians(np.asarray(theta_deg, dtype=np.float64))
    x = r * np.cos(alpha) * np.cos(theta)
    y = r * np.cos(alpha) * np.sin(theta)
    z = r * np.sin(alpha)
    out = np.stack(np.broadcast_arrays(x, y, z), axis=-1)
    return out


def project_cloud(
    cloud: PointCloud,
    height: int,
    width: int,
    rings: np.ndarray | None = None,
) -> RangeImage:
    """Full pipeline: (ring lookup or inference) + scan unfolding + rasterization."""
    if rings is not None:
        cloud = cloud.with_ring(rings)
    elif cloud.ring is None:
        cloud = cloud.with_ring(infer_rings(cloud, height))
    if len(cloud) and cloud.ring.max() >= height:
        raise BoundsError(f"ring index {int(cloud.ring.max())} >= height {height}")
    uv = scan_unfold(cloud, width)
    return rasterize(cloud, uv, height, width)


def normalize_intensity(cloud: PointCloud) -> PointCloud:
    """Scale intensity into [0, 1] by its maximum; already-normalized clouds pass through."""
    if len(cloud) == 0 or cloud.intensity.max() <= 1.0:
        return cloud
    return cloud.with_intensity(cloud.intensity / cloud.intensity.max())
