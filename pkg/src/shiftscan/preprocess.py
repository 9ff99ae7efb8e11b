"""Frame pipelines: raw images to standardized observation vectors.

Two routes feed the detectors:

* real-space: per-pixel standardization against a baseline fitted on the
  first m frames; one observation coordinate per pixel.
* diffraction: geometry fitted once on the first frame (brightness bands
  from histogram gaps -> one Hough circle per band -> averaged center ->
  outermost ring by radial profile), then a 360-entry angular signal per
  frame probed just outside that ring, standardized per angle with the
  same baseline machinery.

Angles are integer degrees 0..359 counterclockwise from the +x axis as
the image is displayed (rows grow downward), so a 90° counterclockwise
rotation of the frame shifts angular features by +90.

Frame I/O: binary PGM (P5, 8- or 16-bit) and raw float32 little-endian
with a one-line `width height count` header; baselines persist in the
raw format as three planes (mean, std, mask).
"""

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError, DataError, EmptyImageError, NoRingError

EPS_STD = 1e-6  # floor for per-pixel std; raw std below it marks the pixel constant


@dataclass
class Frame:
    """One grayscale frame, intensities in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        pix = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if pix.ndim != 2:
            raise DataError(f"frame must be 2-D, got ndim={pix.ndim}")
        if pix.size == 0:
            raise DataError("frame has no pixels")
        if not np.isfinite(pix).all():
            raise DataError("frame intensities must be finite")
        lo, hi = float(pix.min()), float(pix.max())
        if lo < 0.0 or hi > 1.0:
            raise DataError(f"frame intensities must lie in [0, 1], got [{lo}, {hi}]")
        self.pixels = pix

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def vector(self) -> np.ndarray:
        """Row-major flattening; the detector-facing coordinate order."""
        return self.pixels.ravel().copy()


@dataclass
class Baseline:
    """Per-element mean/std fitted on training data, with a constant mask.

    std is floored at EPS_STD; mask marks elements whose raw std fell
    below the floor (their standardized value is defined as 0).
    """

    mean: np.ndarray
    std: np.ndarray
    mask: np.ndarray
    training_frames: int | None = None


@dataclass
class PolarSignal:
    """Mean annulus intensity per integer degree (360 entries).

    Degrees with no annulus pixel carry the annulus-wide mean and are
    flagged in `missing`.
    """

    values: np.ndarray
    missing: np.ndarray
    annulus_mean: float


def _stack_training(frames) -> np.ndarray:
    if isinstance(frames, np.ndarray):
        stack = np.ascontiguousarray(frames, dtype=np.float64)
        if stack.ndim < 2:
            raise DataError("training stack must have at least 2 dimensions (m, ...)")
    else:
        frames = list(frames)
        if any(isinstance(f, Frame) for f in frames):
            shapes = {f.pixels.shape for f in frames if isinstance(f, Frame)}
            if len(shapes) > 1 or len(frames) != sum(isinstance(f, Frame) for f in frames):
                raise DataError("training frames must all be Frames of one shape")
            stack = np.stack([f.pixels for f in frames])
        else:
            stack = np.ascontiguousarray(frames, dtype=np.float64)
    if stack.shape[0] < 2:
        raise DataError(f"need at least 2 training frames, got {stack.shape[0]}")
    return stack


def standardize_fit(frames) -> Baseline:
    """Fit per-element mean and sample std (ddof=1) on the training stack.

    Accepts a list of Frames or any (m, ...) array — the diffraction
    pipeline reuses this on (m, 360) signal stacks.
    """
    stack = _stack_training(frames)
    m = stack.shape[0]
    mean = stack.mean(axis=0)
    std = stack.std(axis=0, ddof=1)
    mask = std < EPS_STD
    std = np.where(mask, EPS_STD, std)
    return Baseline(mean=mean, std=std, mask=mask, training_frames=m)


def standardize_apply(baseline: Baseline, frame) -> np.ndarray:
    """(value - mean)/std per element, flattened row-major; masked -> 0."""
    values = frame.pixels if isinstance(frame, Frame) else np.asarray(frame, dtype=np.float64)
    if values.shape != baseline.mean.shape:
        raise DataError(
            f"frame shape {values.shape} does not match baseline shape {baseline.mean.shape}"
        )
    z = (values - baseline.mean) / baseline.std
    z = np.where(baseline.mask, 0.0, z)
    return z.ravel()


def intensity_histogram(frame: Frame, bins: int = 256) -> np.ndarray:
    """Counts over [0, 1]: bin j covers [j/bins, (j+1)/bins), last bin closed."""
    if bins < 2:
        raise ConfigError(f"bins must be >= 2, got {bins}")
    idx = np.floor(frame.pixels.ravel() * bins).astype(np.int64)
    np.clip(idx, 0, bins - 1, out=idx)
    return np.bincount(idx, minlength=bins)


def find_gaps(counts: np.ndarray, min_width: int = 3) -> list[tuple[float, float]]:
    """Maximal zero-count bin runs of length >= min_width as [lo, hi) intervals."""
    if min_width < 1:
        raise ConfigError(f"min_width must be >= 1, got {min_width}")
    counts = np.asarray(counts)
    bins = counts.size
    gaps = []
    j = 0
    while j < bins:
        if counts[j] == 0:
            j0 = j
            while j < bins and counts[j] == 0:
                j += 1
            if j - j0 >= min_width:
                gaps.append((j0 / bins, j / bins))
        else:
            j += 1
    return gaps


def bands_from_histogram(counts: np.ndarray, min_width: int = 3) -> list[tuple[float, float]]:
    """Complement of the gaps, keeping only segments with nonzero mass."""
    counts = np.asarray(counts)
    bins = counts.size
    gaps = find_gaps(counts, min_width)
    edges = [0.0] + [e for g in gaps for e in g] + [1.0]
    bands = []
    for lo, hi in zip(edges[0::2], edges[1::2]):
        if hi <= lo:
            continue
        j0, j1 = int(round(lo * bins)), int(round(hi * bins))
        if counts[j0:j1].sum() > 0:
            bands.append((lo, hi))
    return bands


def band_threshold(frame: Frame, band: tuple[float, float]) -> np.ndarray:
    """Boolean mask of pixels with intensity in [lo, hi); hi = 1.0 is closed."""
    lo, hi = float(band[0]), float(band[1])
    if not (0.0 <= lo < hi <= 1.0):
        raise ConfigError(f"band must satisfy 0 <= lo < hi <= 1, got [{lo}, {hi})")
    pix = frame.pixels
    upper = pix <= hi if hi >= 1.0 else pix < hi
    return (pix >= lo) & upper


@dataclass
class HoughResult:
    """Accumulator maximum of one circle Hough run."""

    center_x: int
    center_y: int
    radius: int
    votes: int

    @property
    def center(self) -> tuple[int, int]:
        return (self.center_x, self.center_y)


def hough_circle_center(
    mask: np.ndarray,
    r_min: int,
    r_max: int,
    step: int = 1,
    backend=None,
) -> HoughResult:
    """Circle Hough vote over integer centers and radii r_min..r_max by step.

    Every true pixel votes once per radius for each center cell on the
    circle around it; ties go to the smallest (r, cy, cx).
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ConfigError(f"mask must be 2-D, got ndim={mask.ndim}")
    h, w = mask.shape
    if r_min < 1 or step < 1:
        raise ConfigError(f"need r_min >= 1 and step >= 1, got r_min={r_min}, step={step}")
    if r_max < r_min:
        raise ConfigError(f"need r_max >= r_min, got [{r_min}, {r_max}]")
    if r_max > min(w, h) / 2:
        raise ConfigError(
            f"r_max must be <= min(width, height)/2 = {min(w, h) / 2}, got {r_max}"
        )
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise EmptyImageError("binary image has no pixels to vote")
    radii = np.arange(r_min, r_max + 1, step, dtype=np.int64)
    impl = kernels.get_impl(backend)
    votes, r, cy, cx = impl.hough_vote(
        ys.astype(np.int64), xs.astype(np.int64), h, w, radii
    )
    return HoughResult(center_x=int(cx), center_y=int(cy), radius=int(r), votes=int(votes))


def average_centers(centers) -> tuple[float, float]:
    """Coordinate-wise mean of (x, y) center estimates."""
    centers = list(centers)
    if not centers:
        raise ConfigError("cannot average an empty list of centers")
    xs = [float(c[0]) for c in centers]
    ys = [float(c[1]) for c in centers]
    return (sum(xs) / len(xs), sum(ys) / len(ys))


def _radial_profile(frame: Frame, center) -> tuple[np.ndarray, int]:
    """Mean intensity per integer-radius annulus, plus the last full radius."""
    cx, cy = float(center[0]), float(center[1])
    h, w = frame.pixels.shape
    yy, xx = np.indices((h, w))
    dist = np.hypot(xx - cx, yy - cy)
    r_idx = np.floor(dist + 0.5).astype(np.int64)
    r_edge = int(math.floor(min(cx, cy, (w - 1) - cx, (h - 1) - cy)))
    if r_edge < 0:
        raise ConfigError(f"center ({cx}, {cy}) lies outside the frame")
    sums = np.bincount(r_idx.ravel(), weights=frame.pixels.ravel())
    counts = np.bincount(r_idx.ravel())
    n = min(len(sums), r_edge + 1)
    with np.errstate(invalid="ignore"):
        profile = sums[:n] / np.maximum(counts[:n], 1)
    return profile, r_edge


def largest_ring_radius(frame: Frame, center, min_radius: int = 1) -> int:
    """Outermost radial-profile peak above median + 2 * MAD.

    A radius qualifies if its profile value is a local maximum (>= both
    neighbors) and strictly exceeds the robust level; only radii whose
    annulus lies fully inside the frame are searched.
    """
    if min_radius < 1:
        raise ConfigError(f"min_radius must be >= 1, got {min_radius}")
    profile, _ = _radial_profile(frame, center)
    if profile.size < 3:
        raise NoRingError("frame too small around the center to hold a ring")
    med = float(np.median(profile))
    mad = float(np.median(np.abs(profile - med)))
    # MAD collapses to ~0 on flat backgrounds, where summation jitter in the
    # annulus means (~1e-16) would otherwise count as a peak
    level = med + 2.0 * mad + 1e-9 * max(1.0, abs(med))
    for r in range(profile.size - 2, max(min_radius, 1) - 1, -1):
        v = profile[r]
        if v > level and v >= profile[r - 1] and v >= profile[r + 1]:
            return r
    raise NoRingError(f"no radial peak above {level:.6g} at radius >= {min_radius}")


def angular_signal(frame: Frame, center, radius: float, half_width: float = 2.0) -> PolarSignal:
    """Mean intensity per integer degree over the annulus [r - hw, r + hw].

    Degrees counterclockwise from +x as displayed; empty degrees take the
    annulus mean and are flagged.
    """
    cx, cy = float(center[0]), float(center[1])
    if half_width < 0:
        raise ConfigError(f"half_width must be >= 0, got {half_width}")
    h, w = frame.pixels.shape
    edge = min(cx, cy, (w - 1) - cx, (h - 1) - cy)
    if radius - half_width < 0 or radius + half_width > edge:
        raise ConfigError(
            f"annulus [{radius - half_width}, {radius + half_width}] around "
            f"({cx}, {cy}) does not fit inside the {w}x{h} frame"
        )
    yy, xx = np.indices((h, w))
    dist = np.hypot(xx - cx, yy - cy)
    sel = (dist >= radius - half_width) & (dist <= radius + half_width)
    vals = frame.pixels[sel]
    if vals.size == 0:
        raise ConfigError("annulus selects no pixels")
    ang = np.degrees(np.arctan2(-(yy[sel] - cy), xx[sel] - cx))
    deg = np.floor(ang + 0.5).astype(np.int64) % 360
    sums = np.bincount(deg, weights=vals, minlength=360)
    counts = np.bincount(deg, minlength=360)
    annulus_mean = float(vals.mean())
    missing = counts == 0
    values = np.where(missing, annulus_mean, sums / np.maximum(counts, 1))
    return PolarSignal(values=values, missing=missing, annulus_mean=annulus_mean)


@dataclass
class DiffractionConfig:
    """Knobs for the diffraction geometry fit and polar extraction."""

    bins: int = 256
    min_gap_width: int = 3
    hough_r_min: int = 5
    hough_r_max: int | None = None  # default min(w, h) // 2
    hough_step: int = 1
    min_band_pixels: int = 16
    min_ring_radius: int = 5
    probe_offset: int = 3  # probe radius = outermost ring + this
    annulus_half_width: float = 2.0
    training_frames: int = 5


@dataclass
class BandFit:
    """One brightness band and the circle fitted to it."""

    band: tuple[float, float]
    pixels: int
    fit: HoughResult

    def to_dict(self) -> dict:
        return {
            "band": [self.band[0], self.band[1]],
            "pixels": self.pixels,
            "center": [self.fit.center_x, self.fit.center_y],
            "radius": self.fit.radius,
            "votes": self.fit.votes,
        }


@dataclass
class DiffractionGeometry:
    """Fitted beam geometry reused for every frame of a sequence."""

    center: tuple[float, float]
    ring_radius: int
    probe_radius: float
    band_fits: list[BandFit] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "center": [self.center[0], self.center[1]],
            "ring_radius": self.ring_radius,
            "probe_radius": self.probe_radius,
            "bands": [bf.to_dict() for bf in self.band_fits],
        }


def fit_diffraction_geometry(frame: Frame, config: DiffractionConfig | None = None) -> DiffractionGeometry:
    """Fit center, outermost ring, and probe radius from one frame.

    Bands come from histogram gaps; each band with enough pixels gets one
    Hough circle; the centers are averaged; the outermost ring is read
    off the radial profile around that center.
    """
    cfg = config if config is not None else DiffractionConfig()
    h, w = frame.pixels.shape
    r_max = cfg.hough_r_max if cfg.hough_r_max is not None else min(w, h) // 2
    counts = intensity_histogram(frame, cfg.bins)
    bands = bands_from_histogram(counts, cfg.min_gap_width)
    fits = []
    for band in bands:
        mask = band_threshold(frame, band)
        npix = int(mask.sum())
        if npix < cfg.min_band_pixels:
            continue
        try:
            res = hough_circle_center(mask, cfg.hough_r_min, r_max, cfg.hough_step)
        except EmptyImageError:
            continue
        fits.append(BandFit(band=band, pixels=npix, fit=res))
    if not fits:
        raise DataError(
            f"no brightness band produced a circle ({len(bands)} bands from the histogram)"
        )
    center = average_centers([bf.fit.center for bf in fits])
    ring = largest_ring_radius(frame, center, cfg.min_ring_radius)
    probe = float(ring + cfg.probe_offset)
    return DiffractionGeometry(center=center, ring_radius=ring, probe_radius=probe, band_fits=fits)


def extract_polar(frame: Frame, geometry: DiffractionGeometry, config: DiffractionConfig | None = None) -> PolarSignal:
    """Angular signal at the geometry's probe radius."""
    cfg = config if config is not None else DiffractionConfig()
    return angular_signal(frame, geometry.center, geometry.probe_radius, cfg.annulus_half_width)


def realspace_observations(frames, training_frames: int = 5):
    """Real-space pipeline: fit on the first m frames, standardize the rest.

    Returns (X, baseline): X has one row of width*height standardized
    pixels per post-training frame (possibly zero rows).
    """
    frames = list(frames)
    if len(frames) < training_frames:
        raise DataError(
            f"need at least {training_frames} training frames, got {len(frames)}"
        )
    baseline = standardize_fit(frames[:training_frames])
    rows = [standardize_apply(baseline, f) for f in frames[training_frames:]]
    d = baseline.mean.size
    X = np.vstack(rows) if rows else np.empty((0, d))
    return X, baseline


def diffraction_observations(frames, config: DiffractionConfig | None = None):
    """Diffraction pipeline: geometry off frame 1, 360-dim signals, standardize.

    Returns (X, geometry, baseline): X has one 360-column row per
    post-training frame.
    """
    cfg = config if config is not None else DiffractionConfig()
    frames = list(frames)
    if len(frames) < cfg.training_frames:
        raise DataError(
            f"need at least {cfg.training_frames} training frames, got {len(frames)}"
        )
    geometry = fit_diffraction_geometry(frames[0], cfg)
    signals = np.stack([extract_polar(f, geometry, cfg).values for f in frames])
    baseline = standardize_fit(signals[: cfg.training_frames])
    rows = [standardize_apply(baseline, s) for s in signals[cfg.training_frames :]]
    X = np.vstack(rows) if rows else np.empty((0, 360))
    return X, geometry, baseline


# ---------------------------------------------------------------------------
# Frame I/O


def read_pgm(path) -> Frame:
    """Binary PGM (P5), 8-bit or 16-bit big-endian, scaled to [0, 1]."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise DataError(f"{path}: not a binary PGM (P5) file")
    # header: magic, width, height, maxval as whitespace-separated tokens,
    # '#' comments allowed through end of line
    tokens = []
    pos = 2
    while len(tokens) < 3:
        if pos >= len(data):
            raise DataError(f"{path}: truncated PGM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            eol = data.find(b"\n", pos)
            if eol == -1:
                raise DataError(f"{path}: unterminated PGM comment")
            pos = eol + 1
        elif ch.isspace():
            pos += 1
        else:
            m = re.match(rb"[0-9]+", data[pos:])
            if not m:
                raise DataError(f"{path}: malformed PGM header")
            tokens.append(int(m.group(0)))
            pos += m.end()
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = tokens
    if width < 1 or height < 1 or not (0 < maxval < 65536):
        raise DataError(f"{path}: invalid PGM dimensions or maxval")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    raster = data[pos : pos + need]
    if len(raster) != need:
        raise DataError(f"{path}: PGM raster has {len(raster)} bytes, expected {need}")
    arr = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return Frame(pixels=arr.astype(np.float64) / maxval)


def write_pgm(path, frame: Frame, maxval: int = 255) -> None:
    if not (0 < maxval < 65536):
        raise ConfigError(f"maxval must be in [1, 65535], got {maxval}")
    q = np.floor(frame.pixels * maxval + 0.5).astype(np.uint32)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    header = f"P5\n{frame.width} {frame.height}\n{maxval}\n".encode()
    Path(path).write_bytes(header + q.astype(dtype).tobytes())


def _read_raw_arrays(path):
    """Raw float32 LE file: `width height count\\n` header then the planes."""
    with open(path, "rb") as fh:
        header = fh.readline()
        try:
            width, height, count = (int(tok) for tok in header.split())
        except ValueError:
            raise DataError(f"{path}: malformed raw header {header!r}") from None
        if width < 1 or height < 1 or count < 1:
            raise DataError(f"{path}: invalid raw dimensions {width}x{height}x{count}")
        payload = fh.read()
    need = width * height * count * 4
    if len(payload) != need:
        raise DataError(f"{path}: raw payload has {len(payload)} bytes, expected {need}")
    arr = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return [arr[i * width * height : (i + 1) * width * height].reshape(height, width) for i in range(count)]


def _write_raw_arrays(path, planes) -> None:
    planes = [np.asarray(p, dtype=np.float64) for p in planes]
    h, w = planes[0].shape
    if any(p.shape != (h, w) for p in planes):
        raise DataError("all raw planes must share one shape")
    with open(path, "wb") as fh:
        fh.write(f"{w} {h} {len(planes)}\n".encode())
        for p in planes:
            fh.write(p.astype("<f4").tobytes())


def read_raw_frames(path) -> list[Frame]:
    return [Frame(pixels=p) for p in _read_raw_arrays(path)]


def write_raw_frames(path, frames) -> None:
    _write_raw_arrays(path, [f.pixels for f in frames])


def save_baseline(path, baseline: Baseline) -> None:
    """Persist as three float32 planes: mean, std, mask (0/1)."""
    mean = np.atleast_2d(baseline.mean)
    std = np.atleast_2d(baseline.std)
    mask = np.atleast_2d(baseline.mask.astype(np.float64))
    _write_raw_arrays(path, [mean, std, mask])


def load_baseline(path) -> Baseline:
    """Inverse of save_baseline (training frame count is not persisted)."""
    planes = _read_raw_arrays(path)
    if len(planes) != 3:
        raise DataError(f"{path}: baseline file must hold 3 planes, got {len(planes)}")
    mean, std, mask = planes
    return Baseline(mean=mean, std=std, mask=mask > 0.5, training_frames=None)


_FRAME_SUFFIXES = (".pgm", ".raw", ".f32")


def load_frames(path) -> list[Frame]:
    """One file or a directory of frames, lexicographic by file name.

    PGM files hold one frame each; raw files may hold several.  All
    frames must share one shape.
    """
    p = Path(path)
    if p.is_dir():
        files = sorted(q for q in p.iterdir() if q.suffix.lower() in _FRAME_SUFFIXES)
        if not files:
            raise DataError(f"{path}: no frame files ({'/'.join(_FRAME_SUFFIXES)}) found")
    elif p.exists():
        files = [p]
    else:
        raise DataError(f"{path}: no such file or directory")
    frames = []
    shape = None
    for f in files:
        loaded = [read_pgm(f)] if f.suffix.lower() == ".pgm" else read_raw_frames(f)
        for fr in loaded:
            if shape is None:
                shape = fr.pixels.shape
            elif fr.pixels.shape != shape:
                raise DataError(
                    f"{f}: frame shape {fr.pixels.shape} drifts from {shape}"
                )
            frames.append(fr)
    return frames
