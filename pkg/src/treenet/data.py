"""Image I/O, bicubic degradation, 41x41 patch extraction and dihedral augmentation.

Images are luminance planes in [0, 1]. Colour input is reduced with the
BT.601 weights (0.299, 0.587, 0.114).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError

PATCH_SIZE = 41
PATCH_STRIDE = 41
SCALES = (2, 3, 4)
BT601 = np.array([0.299, 0.587, 0.114])
IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm")


@dataclass(frozen=True)
class ImagePlane:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeError(f"ImagePlane needs a 2-D array, got shape {v.shape}")
        object.__setattr__(self, "values", np.clip(v, 0.0, 1.0))

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape


# ---------------------------------------------------------------------------
# portable any-map I/O


def _read_header(buf, magic):
    """Parse width, height, maxval; returns them and the offset of the raster."""
    pos = 2
    fields = []
    n = len(buf)
    while len(fields) < 3:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and buf[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise DataError(f"{magic.decode()} header: expected an integer", offset=start)
        fields.append(int(buf[start:pos]))
    if pos >= n or not buf[pos:pos + 1].isspace():
        raise DataError(f"{magic.decode()} header: missing whitespace before raster", offset=pos)
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise DataError(f"image dimensions must be positive, got {width}x{height}", offset=3)
    if not 1 <= maxval <= 65535:
        raise DataError(f"maxval must be in 1..65535, got {maxval}", offset=pos)
    return width, height, maxval, pos + 1


def decode_pnm(buf):
    """Binary PGM (P5) or PPM (P6) bytes -> ImagePlane."""
    magic = bytes(buf[:2])
    if magic not in (b"P5", b"P6"):
        raise DataError(f"unsupported format {magic!r}; expected binary PGM (P5) or PPM (P6)", offset=0)
    width, height, maxval, start = _read_header(buf, magic)
    channels = 1 if magic == b"P5" else 3
    depth = 1 if maxval < 256 else 2
    need = width * height * channels * depth
    have = len(buf) - start
    if have < need:
        raise DataError(f"truncated raster: need {need} bytes, file has {have}", offset=len(buf))
    dtype = np.uint8 if depth == 1 else np.dtype(">u2")
    raw = np.frombuffer(buf, dtype=dtype, count=width * height * channels, offset=start)
    values = raw.astype(np.float64) / maxval
    if channels == 3:
        values = values.reshape(height, width, 3) @ BT601
    else:
        values = values.reshape(height, width)
    return ImagePlane(values)


def load_image(path):
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    try:
        return decode_pnm(buf)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def encode_pgm(img, maxval=255):
    v = np.round(_values(img) * maxval)
    h, w = v.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    return header + v.astype(dtype).tobytes()


def save_pgm(path, img, maxval=255):
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img, maxval))


def list_images(directory):
    if not os.path.isdir(directory):
        raise DataError(f"image directory {directory} does not exist")
    names = sorted(f for f in os.listdir(directory) if f.lower().endswith(IMAGE_SUFFIXES))
    return [os.path.join(directory, f) for f in names]


def load_directory(directory):
    paths = list_images(directory)
    if not paths:
        raise DataError(f"no .pgm/.ppm images found in {directory}")
    return [load_image(p) for p in paths], paths


# ---------------------------------------------------------------------------
# resampling


def _values(img):
    return img.values if isinstance(img, ImagePlane) else np.asarray(img, dtype=np.float64)


def cubic_weight(t, a=-0.5):
    """Keys cubic convolution kernel; a = -0.5 is Catmull-Rom."""
    t = np.abs(t)
    w = np.zeros_like(t)
    near, far = t <= 1, (t > 1) & (t < 2)
    w[near] = (a + 2) * t[near] ** 3 - (a + 3) * t[near] ** 2 + 1
    w[far] = a * t[far] ** 3 - 5 * a * t[far] ** 2 + 8 * a * t[far] - 4 * a
    return w


def resample_taps(n_in, n_out):
    """Source indices (edge-clamped) and weights, 4 taps per output sample.

    ``src = (dst + 0.5) * n_in / n_out - 0.5`` (pixel centres aligned).
    """
    dst = np.arange(n_out, dtype=np.float64)
    src = (dst + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(np.int64)
    offsets = np.arange(-1, 3)
    idx = base[:, None] + offsets[None, :]
    weights = cubic_weight(src[:, None] - idx)
    return np.clip(idx, 0, n_in - 1), weights, np.clip(base, 0, n_in - 1)


def _resample_axis(arr, n_out, axis):
    idx, wts, ref = resample_taps(arr.shape[axis], n_out)
    moved = np.moveaxis(arr, axis, -1)
    anchor = moved[..., ref]
    # anchor + sum w * (x - anchor): exact for constant input since weights sum to 1
    taps = moved[..., idx] - anchor[..., None]
    out = anchor + np.einsum("...ij,ij->...i", taps, wts)
    return np.moveaxis(out, -1, axis)


def bicubic_resize(img, out_width, out_height):
    """Separable Catmull-Rom resize, clamped to [0, 1]."""
    if out_width < 1 or out_height < 1:
        raise ShapeError(f"output size must be at least 1x1, got {out_width}x{out_height}")
    v = _values(img)
    v = _resample_axis(v, out_width, axis=1)
    v = _resample_axis(v, out_height, axis=0)
    return ImagePlane(v)


def make_pair(hr, scale):
    """(bicubic-degraded input, cropped target), both the size of the cropped HR."""
    if scale not in SCALES:
        raise ShapeError(f"scale must be one of {SCALES}, got {scale}")
    v = _values(hr)
    h, w = (v.shape[0] // scale) * scale, (v.shape[1] // scale) * scale
    if h == 0 or w == 0:
        raise ShapeError(f"a {v.shape[0]}x{v.shape[1]} image is smaller than scale {scale}")
    target = ImagePlane(v[:h, :w])
    small = bicubic_resize(target, w // scale, h // scale)
    return bicubic_resize(small, w, h), target


# ---------------------------------------------------------------------------
# patches and augmentation


def extract_patches(img, size=PATCH_SIZE, stride=PATCH_STRIDE):
    """Top-left aligned grid of windows; partial windows at the edges are dropped."""
    v = _values(img)
    h, w = v.shape
    if size > min(h, w):
        raise ShapeError(f"patch size {size} exceeds image size {h}x{w}")
    return [
        ImagePlane(v[y:y + size, x:x + size])
        for y in range(0, h - size + 1, stride)
        for x in range(0, w - size + 1, stride)
    ]


def dihedral(arr, index):
    """Transform ``index`` in 0..7: rotate by ``index % 4`` quarter turns, flip if ``index >= 4``."""
    out = np.rot90(arr, index % 4)
    if index >= 4:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def augment(patch):
    """All eight dihedral transforms, identity first. Duplicates are kept."""
    v = _values(patch)
    if v.shape[0] != v.shape[1]:
        raise ShapeError(f"augment needs a square patch, got {v.shape}")
    return [ImagePlane(dihedral(v, t)) for t in range(8)]


@dataclass
class SampleSet:
    inputs: np.ndarray
    targets: np.ndarray
    scales: np.ndarray
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        if self.inputs.shape != self.targets.shape:
            raise ShapeError(f"inputs {self.inputs.shape} and targets {self.targets.shape} differ")
        if len(self.scales) != len(self.inputs):
            raise ShapeError("one scale per sample pair is required")

    def __len__(self):
        return len(self.inputs)

    @property
    def pairs(self):
        return [(ImagePlane(i), ImagePlane(t), int(s)) for i, t, s in zip(self.inputs, self.targets, self.scales)]


def build_multiscale_dataset(images, scales=SCALES, augment_flag=True, seed=0, max_pairs=None,
                             size=PATCH_SIZE, stride=PATCH_STRIDE):
    """Aligned (input, target) patch pairs for every image x scale.

    Samples are ordered by (image, scale, patch, transform). With
    ``max_pairs`` a seeded subset is kept, still in that order.
    """
    images = list(images)
    if not images:
        raise ShapeError("build_multiscale_dataset needs at least one image")
    ins, tgts, scs, prov = [], [], [], []
    for img_id, img in enumerate(images):
        for scale in sorted(scales):
            try:
                lr, hr = make_pair(img, scale)
                lr_p, hr_p = extract_patches(lr, size, stride), extract_patches(hr, size, stride)
            except ShapeError:
                continue
            for p_id, (a, b) in enumerate(zip(lr_p, hr_p)):
                transforms = range(8) if augment_flag else (0,)
                for t in transforms:
                    ins.append(dihedral(a.values, t))
                    tgts.append(dihedral(b.values, t))
                    scs.append(scale)
                    prov.append((img_id, scale, p_id, t))
    if not ins:
        raise DataError(f"no image is large enough for a {size}x{size} patch at scales {sorted(scales)}")
    keep = np.arange(len(ins))
    if max_pairs is not None and max_pairs < len(ins):
        keep = np.sort(np.random.default_rng(seed).choice(len(ins), size=max_pairs, replace=False))
    return SampleSet(
        inputs=np.stack([ins[i] for i in keep]),
        targets=np.stack([tgts[i] for i in keep]),
        scales=np.array([scs[i] for i in keep], dtype=np.int64),
        provenance=[prov[i] for i in keep],
    )


# ---------------------------------------------------------------------------
# packed sample cache
#
#   magic  b"TNSC"      4 bytes
#   header <IIII        version=1, count, height, width (little-endian u32)
#   scales <i8[count]
#   inputs <f8[count*height*width]   row-major, sample-outermost
#   targets <f8[count*height*width]

_CACHE_MAGIC = b"TNSC"


def save_sample_cache(path, samples):
    n, h, w = samples.inputs.shape
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC + struct.pack("<IIII", 1, n, h, w))
        fh.write(samples.scales.astype("<i8").tobytes())
        fh.write(samples.inputs.astype("<f8").tobytes())
        fh.write(samples.targets.astype("<f8").tobytes())


def load_sample_cache(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != _CACHE_MAGIC:
        raise DataError(f"{path}: not a sample cache", offset=0)
    if len(buf) < 20:
        raise DataError(f"{path}: truncated header", offset=len(buf))
    version, n, h, w = struct.unpack_from("<IIII", buf, 4)
    if version != 1:
        raise DataError(f"{path}: unsupported cache version {version}", offset=4)
    need = 20 + 8 * n + 2 * 8 * n * h * w
    if len(buf) < need:
        raise DataError(f"{path}: truncated payload, need {need} bytes", offset=len(buf))
    scales = np.frombuffer(buf, "<i8", n, 20).astype(np.int64)
    off = 20 + 8 * n
    inputs = np.frombuffer(buf, "<f8", n * h * w, off).reshape(n, h, w).astype(np.float64)
    targets = np.frombuffer(buf, "<f8", n * h * w, off + 8 * n * h * w).reshape(n, h, w).astype(np.float64)
    return SampleSet(inputs, targets, scales)
