"""Domain containers and bit-exact binary readers/writers.

File layouts
------------
Point cloud (``.bin``)
    Records of four IEEE-754 32-bit little-endian floats: x, y, z, intensity.
Labels (``.label``)
    One 32-bit little-endian word per point; the semantic id is bits 0-15.
Ring sidecar (``.ring``)
    One 16-bit little-endian unsigned integer (beam index) per point.
Range image (``.rimg``)
    Magic ``RIMG``, u32 version=1, u32 C, H, W, then C*H*W float32 LE values
    row-major (channel, then row, then column), then H*W validity bytes (0/1),
    then u32 N and N pairs of u32 (u, v); 0xFFFFFFFF, 0xFFFFFFFF marks a point
    that was never projected.

All containers are immutable after construction (their arrays are marked
read-only) and safe to share across threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .validation import ensure_finite

RIMG_MAGIC = b"RIMG"
RIMG_VERSION = 1
UNPROJECTED = -1  # in-memory LUT sentinel; stored on disk as 0xFFFFFFFF
_UNPROJECTED_DISK = 0xFFFFFFFF
IGNORE_ID = 255

# Input channel order for point images; C_in = 5.
CHANNELS = ("x", "y", "z", "range", "intensity")
FILL_VALUE = -1.0


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PointCloud:
    """N points with coordinates in meters, intensity, and optional beam index."""

    xyz: np.ndarray
    intensity: np.ndarray
    ring: np.ndarray | None = None

    def __post_init__(self):
        xyz = np.atleast_2d(np.asarray(self.xyz))
        if xyz.size == 0:
            xyz = xyz.reshape(0, 3)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise ValidationError(f"xyz must be (N, 3), got {xyz.shape}")
        intensity = np.asarray(self.intensity).reshape(-1)
        if intensity.shape[0] != xyz.shape[0]:
            raise ValidationError(
                f"intensity length {intensity.shape[0]} != point count {xyz.shape[0]}"
            )
        ensure_finite("xyz", xyz)
        ensure_finite("intensity", intensity)
        object.__setattr__(self, "xyz", _freeze(xyz))
        object.__setattr__(self, "intensity", _freeze(intensity))
        if self.ring is not None:
            ring = np.asarray(self.ring).reshape(-1).astype(np.int64)
            if ring.shape[0] != xyz.shape[0]:
                raise ValidationError(f"ring length {ring.shape[0]} != point count {xyz.shape[0]}")
            if ring.size and ring.min() < 0:
                raise ValidationError("ring indices must be non-negative")
            object.__setattr__(self, "ring", _freeze(ring))

    def __len__(self) -> int:
        return self.xyz.shape[0]

    def with_ring(self, ring: np.ndarray) -> "PointCloud":
        return replace(self, ring=ring)

    def with_intensity(self, intensity: np.ndarray) -> "PointCloud":
        return replace(self, intensity=intensity)


@dataclass(frozen=True)
class LabelArray:
    """Per-point semantic class ids (16-bit domain)."""

    semantic: np.ndarray

    def __post_init__(self):
        semantic = np.asarray(self.semantic).reshape(-1).astype(np.int64)
        if semantic.size and (semantic.min() < 0 or semantic.max() > 0xFFFF):
            raise ValidationError("semantic ids must fit in 16 bits")
        object.__setattr__(self, "semantic", _freeze(semantic))

    def __len__(self) -> int:
        return self.semantic.shape[0]


@dataclass(frozen=True)
class RangeImage:
    """C x H x W float32 grid with validity mask and point -> pixel lookup table.

    ``data`` is always float32 (the container's on-disk precision) so that
    write/read round-trips are bit-exact.  ``lut`` holds one (u, v) row per
    source point; UNPROJECTED marks points that never received a pixel.
    """

    data: np.ndarray
    valid: np.ndarray
    lut: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValidationError(f"data must be (C, H, W), got {data.shape}")
        ensure_finite("data", data)
        _, h, w = data.shape
        valid = np.asarray(self.valid, dtype=bool)
        if valid.shape != (h, w):
            raise ValidationError(f"valid must be (H, W)={h, w}, got {valid.shape}")
        lut = np.asarray(self.lut, dtype=np.int64)
        if lut.size == 0:
            lut = lut.reshape(0, 2)
        if lut.ndim != 2 or lut.shape[1] != 2:
            raise ValidationError(f"lut must be (N, 2), got {lut.shape}")
        projected = lut[(lut[:, 0] != UNPROJECTED) | (lut[:, 1] != UNPROJECTED)]
        if projected.size:
            if projected.min() < 0:
                raise ValidationError("lut entries must be UNPROJECTED or non-negative")
            if projected[:, 0].max() >= w or projected[:, 1].max() >= h:
                raise ValidationError("lut entries exceed image bounds")
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "valid", _freeze(valid))
        object.__setattr__(self, "lut", _freeze(lut))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def validate_point_image(img: RangeImage) -> None:
    """Check the 5-channel point-image semantics (not required of feature dumps)."""
    if img.channels != len(CHANNELS):
        raise ValidationError(f"point image needs {len(CHANNELS)} channels, got {img.channels}")
    r = img.data[CHANNELS.index("range")]
    if img.valid.any() and not np.all(r[img.valid] > 0):
        raise ValidationError("range channel must be positive at valid pixels")
    invalid = ~img.valid
    if invalid.any() and not np.all(img.data[:, invalid] == FILL_VALUE):
        raise ValidationError(f"invalid pixels must hold the fill value {FILL_VALUE}")


def read_point_cloud_bin(path: str | Path) -> PointCloud:
    """Decode x, y, z, intensity records of four float32 LE values each."""
    raw = Path(path).read_bytes()
    if len(raw) % 16 != 0:
        raise FormatError(f"{path}: length {len(raw)} is not a multiple of 16 bytes")
    records = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    return PointCloud(xyz=records[:, :3].copy(), intensity=records[:, 3].copy())


def write_point_cloud_bin(cloud: PointCloud, path: str | Path) -> None:
    records = np.empty((len(cloud), 4), dtype="<f4")
    records[:, :3] = cloud.xyz
    records[:, 3] = cloud.intensity
    Path(path).write_bytes(records.tobytes())


def read_labels(path: str | Path, expected_n: int | None = None) -> LabelArray:
    """Decode 32-bit LE words; the semantic id is the low 16 bits of each."""
    raw = Path(path).read_bytes()
    if len(raw) % 4 != 0:
        raise FormatError(f"{path}: length {len(raw)} is not a multiple of 4 bytes")
    words = np.frombuffer(raw, dtype="<u4")
    if expected_n is not None and words.shape[0] != expected_n:
        raise FormatError(f"{path}: {words.shape[0]} labels but expected {expected_n}")
    return LabelArray(semantic=(words & 0xFFFF).astype(np.int64))


def write_labels(labels: LabelArray, path: str | Path) -> None:
    Path(path).write_bytes(labels.semantic.astype("<u4").tobytes())


def read_rings(path: str | Path, expected_n: int | None = None) -> np.ndarray:
    """Decode the ring sidecar: one u16 LE beam index per point."""
    raw = Path(path).read_bytes()
    if len(raw) % 2 != 0:
        raise FormatError(f"{path}: length {len(raw)} is not a multiple of 2 bytes")
    rings = np.frombuffer(raw, dtype="<u2").astype(np.int64)
    if expected_n is not None and rings.shape[0] != expected_n:
        raise FormatError(f"{path}: {rings.shape[0]} rings but expected {expected_n}")
    return rings


def write_rings(rings: np.ndarray, path: str | Path) -> None:
    rings = np.asarray(rings)
    if rings.size and (rings.min() < 0 or rings.max() > 0xFFFF):
        raise ValidationError("ring indices must fit in u16")
    Path(path).write_bytes(rings.astype("<u2").tobytes())


def write_range_image(img: RangeImage, path: str | Path) -> None:
    c, h, w = img.data.shape
    n = img.lut.shape[0]
    lut = img.lut.copy()
    lut[lut == UNPROJECTED] = _UNPROJECTED_DISK
    parts = [
        RIMG_MAGIC,
        struct.pack("<IIII", RIMG_VERSION, c, h, w),
        img.data.astype("<f4").tobytes(),
        img.valid.astype(np.uint8).tobytes(),
        struct.pack("<I", n),
        lut.astype("<u4").tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def read_range_image(path: str | Path) -> RangeImage:
    raw = Path(path).read_bytes()
    view = memoryview(raw)
    if len(raw) < 20:
        raise FormatError(f"{path}: truncated header")
    if view[:4] != RIMG_MAGIC:
        raise FormatError(f"{path}: bad magic {bytes(view[:4])!r}")
    version, c, h, w = struct.unpack_from("<IIII", raw, 4)
    if version != RIMG_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = 20
    data_bytes = c * h * w * 4
    valid_bytes = h * w
    if len(raw) < offset + data_bytes + valid_bytes + 4:
        raise FormatError(f"{path}: truncated body")
    data = np.frombuffer(view, dtype="<f4", count=c * h * w, offset=offset).reshape(c, h, w)
    offset += data_bytes
    valid_raw = np.frombuffer(view, dtype=np.uint8, count=h * w, offset=offset)
    if not np.all((valid_raw == 0) | (valid_raw == 1)):
        raise FormatError(f"{path}: validity bytes must be 0 or 1")
    valid = valid_raw.reshape(h, w).astype(bool)
    offset += valid_bytes
    (n,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    if len(raw) != offset + n * 8:
        raise FormatError(f"{path}: LUT length mismatch ({len(raw) - offset} bytes for {n} entries)")
    lut = np.frombuffer(view, dtype="<u4", count=n * 2, offset=offset).reshape(n, 2).astype(np.int64)
    lut[lut == _UNPROJECTED_DISK] = UNPROJECTED
    return RangeImage(data=data.copy(), valid=valid, lut=lut)


def load_class_map(path: str | Path) -> dict[int, int]:
    """Parse a ``raw_id = mapped_id`` remap table (key = value lines)."""
    from .config import load_config

    mapping = {}
    for key, value in load_config(path).items():
        try:
            mapping[int(key)] = int(value)
        except ValueError as exc:
            raise ValidationError(f"{path}: class map entries must be integers: {key} = {value}") from exc
    return mapping


def remap_labels(labels: LabelArray, mapping: dict[int, int], ignore_id: int = IGNORE_ID) -> LabelArray:
    """Apply a class remap; ids missing from the table become ``ignore_id``."""
    table = np.full(0x10000, ignore_id, dtype=np.int64)
    for raw, mapped in mapping.items():
        table[raw] = mapped
    return LabelArray(semantic=table[labels.semantic])
