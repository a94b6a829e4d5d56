"""Parallel-beam CT test problems and image-quality metrics.

The projector follows the usual simulation convention: an n-by-n image
of unit-square pixels occupying [-n/2, n/2]^2, and for every projection
angle a fan of p equispaced parallel rays covering a detector of width
sqrt(2)*n centered on the image (so the default p = round(sqrt(2)*n)
rays are one pixel apart and cover the diagonal). Each matrix entry is
the exact intersection length of a ray line with a pixel cell, computed
by an incremental grid traversal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .linop import Grad2D, Identity, SparseMatrix, grad_2d
from .prox import GroupL12, IndicatorBox, IndicatorNonneg, L1, ProxFunction, SqL2, Zero
from .solver import Problem

__all__ = [
    "SHEPP_LOGAN_ELLIPSES", "Geometry", "TomoProblem", "CtModelSpec",
    "render_ellipses", "shepp_logan", "default_ray_count", "ray_chords",
    "paralleltomo", "add_noise", "snr_db", "build_ct_problem",
    "write_pgm", "read_pgm", "write_vector_csv", "read_vector_csv",
]

# Modified Shepp-Logan head phantom: ten ellipses as
# (intensity, semi_axis_x, semi_axis_y, center_x, center_y, angle_deg)
# on the square [-1, 1]^2. Summed intensities stay within [0, 1].
SHEPP_LOGAN_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)


def render_ellipses(n: int, ellipses) -> np.ndarray:
    """Sum of ellipse intensities at the n*n pixel centers, row-major.

    Pixel centers are mapped onto [-1, 1]^2 with row 0 at the top; a
    pixel takes the summed intensity of every ellipse whose closed
    interior contains its center.
    """
    if n < 1:
        raise ValueError(f"image side length must be >= 1, got {n}")
    half = n / 2.0
    centers = (np.arange(n) + 0.5 - half) / half
    x = centers[np.newaxis, :]
    y = -centers[:, np.newaxis]
    image = np.zeros((n, n))
    for intensity, a, b, x0, y0, angle_deg in ellipses:
        phi = math.radians(angle_deg)
        dx = x - x0
        dy = y - y0
        u = dx * math.cos(phi) + dy * math.sin(phi)
        w = dy * math.cos(phi) - dx * math.sin(phi)
        image[(u * u) / (a * a) + (w * w) / (b * b) <= 1.0] += intensity
    return image.reshape(n * n)


def shepp_logan(n: int) -> np.ndarray:
    """Modified Shepp-Logan phantom as an n^2 vector with values in [0, 1]."""
    return np.clip(render_ellipses(n, SHEPP_LOGAN_ELLIPSES), 0.0, 1.0)


def default_ray_count(n: int) -> int:
    """Rays per angle covering the image diagonal: round(sqrt(2) * n)."""
    return int(round(math.sqrt(2.0) * n))


@dataclass(frozen=True)
class Geometry:
    """Parallel-beam acquisition: image side, angles in degrees, rays per angle."""

    n: int
    angles_deg: tuple
    p: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("image side length must be >= 1")
        if len(self.angles_deg) == 0:
            raise ValueError("at least one projection angle is required")
        if self.p < 1:
            raise ValueError("rays per angle must be >= 1")
        object.__setattr__(self, "angles_deg", tuple(float(a) for a in self.angles_deg))

    @property
    def detector_span(self) -> float:
        return math.sqrt(2.0) * self.n

    def ray_offsets(self) -> np.ndarray:
        """Signed perpendicular ray offsets from the image center."""
        if self.p == 1:
            return np.zeros(1)
        half = self.detector_span / 2.0
        return np.linspace(-half, half, self.p)

    @property
    def num_rays(self) -> int:
        return len(self.angles_deg) * self.p


@dataclass(frozen=True)
class TomoProblem:
    """A sparse CT system with its clean projections and ground truth."""

    system_matrix: SparseMatrix
    projections: np.ndarray
    ground_truth: np.ndarray
    geometry: Geometry


def ray_chords(n: int, angle_deg: float, offset: float):
    """Pixel indices and chord lengths of one ray through the image.

    The ray is the infinite line through ``offset * (cos a, sin a)`` with
    direction ``(-sin a, cos a)``; pixels are unit squares tiling
    [-n/2, n/2]^2, indexed row-major with row 0 at the top. Returns
    (indices, lengths); rays that miss the image return empty arrays.
    """
    half = n / 2.0
    theta = math.radians(angle_deg)
    ux, uy = -math.sin(theta), math.cos(theta)
    ox, oy = offset * math.cos(theta), offset * math.sin(theta)

    empty = np.zeros(0, dtype=np.intp), np.zeros(0)
    t_lo, t_hi = -math.inf, math.inf
    for u, o in ((ux, ox), (uy, oy)):
        if u == 0.0:
            if not -half < o < half:
                return empty
        else:
            t1, t2 = (-half - o) / u, (half - o) / u
            t_lo = max(t_lo, min(t1, t2))
            t_hi = min(t_hi, max(t1, t2))
    if t_hi - t_lo <= 1e-12:
        return empty

    crossings = [np.array([t_lo, t_hi])]
    lines = np.arange(n + 1) - half
    for u, o in ((ux, ox), (uy, oy)):
        if u != 0.0:
            t = (lines - o) / u
            crossings.append(t[(t > t_lo) & (t < t_hi)])
    ts = np.unique(np.concatenate(crossings))

    lengths = np.diff(ts)
    keep = lengths > 1e-12
    mids = ts[:-1] + lengths / 2.0
    col = np.clip(np.floor(ox + mids * ux + half).astype(np.intp), 0, n - 1)
    row_from_bottom = np.clip(np.floor(oy + mids * uy + half).astype(np.intp), 0, n - 1)
    indices = (n - 1 - row_from_bottom) * n + col
    return indices[keep], lengths[keep]


def paralleltomo(n: int, angles_deg: Optional[Sequence[float]] = None,
                 p: Optional[int] = None) -> TomoProblem:
    """Assemble a parallel-beam test problem (system matrix, data, truth).

    Defaults follow the usual simulation setup: angles 0, 1, ..., 179
    degrees and p = round(sqrt(2) * n) rays per angle. The matrix has one
    row per (angle, ray) pair, in angle-major order; rays that miss the
    image keep their all-zero rows so the shape is always
    (len(angles) * p, n^2). Projections are the clean sinogram of the
    Shepp-Logan phantom.
    """
    if angles_deg is None:
        angles_deg = np.arange(0.0, 180.0, 1.0)
    if p is None:
        p = default_ray_count(n)
    geometry = Geometry(n=n, angles_deg=tuple(angles_deg), p=int(p))

    offsets = geometry.ray_offsets()
    row_chunks, col_chunks, val_chunks = [], [], []
    for angle_index, angle in enumerate(geometry.angles_deg):
        for ray_index, offset in enumerate(offsets):
            indices, lengths = ray_chords(n, angle, offset)
            if indices.size:
                row = angle_index * geometry.p + ray_index
                row_chunks.append(np.full(indices.size, row, dtype=np.intp))
                col_chunks.append(indices)
                val_chunks.append(lengths)

    if row_chunks:
        matrix = SparseMatrix.from_coo(
            np.concatenate(row_chunks), np.concatenate(col_chunks),
            np.concatenate(val_chunks), shape=(geometry.num_rays, n * n))
    else:
        matrix = SparseMatrix(np.zeros((geometry.num_rays, n * n)))
    ground_truth = shepp_logan(n)
    return TomoProblem(system_matrix=matrix,
                       projections=matrix.apply(ground_truth),
                       ground_truth=ground_truth, geometry=geometry)


def add_noise(b, gaussian_sigma: float = 0.0, impulse_fraction: float = 0.0,
              impulse_scale: float = 1.0, seed: int = 0) -> np.ndarray:
    """Gaussian noise plus impulsive corruption of the projection data.

    Adds gaussian_sigma * N(0,1) to every entry, then replaces a random
    fraction of entries (each independently with probability
    ``impulse_fraction``) by uniform draws from
    [0, impulse_scale * max|b|]. Deterministic for a fixed seed.
    """
    b = np.asarray(b, dtype=np.float64)
    if gaussian_sigma < 0:
        raise ValueError("gaussian_sigma must be nonnegative")
    if not 0.0 <= impulse_fraction <= 1.0:
        raise ValueError("impulse_fraction must lie in [0, 1]")
    if impulse_scale < 0:
        raise ValueError("impulse_scale must be nonnegative")
    rng = np.random.default_rng(seed)
    out = b + gaussian_sigma * rng.standard_normal(b.size)
    mask = rng.random(b.size) < impulse_fraction
    ceiling = impulse_scale * (np.max(np.abs(b)) if b.size else 0.0)
    replacements = rng.uniform(0.0, ceiling, b.size)
    out[mask] = replacements[mask]
    return out


def snr_db(x_true, x_rec, factor10: bool = True) -> float:
    """Signal-to-noise ratio 10*log10(||x_true||^2 / ||x_true - x_rec||^2).

    Returns +inf for a perfect reconstruction. ``factor10=False`` drops
    the conventional factor 10 and returns the bare log10 of the energy
    ratio.
    """
    x_true = np.asarray(x_true, dtype=np.float64)
    x_rec = np.asarray(x_rec, dtype=np.float64)
    if x_true.shape != x_rec.shape:
        raise ValueError(f"shape mismatch: {x_true.shape} vs {x_rec.shape}")
    signal = float(np.dot(x_true, x_true))
    if signal == 0.0:
        raise ValueError("ground truth must be nonzero")
    error = x_true - x_rec
    noise = float(np.dot(error, error))
    if noise == 0.0:
        return math.inf
    ratio = signal / noise
    return (10.0 if factor10 else 1.0) * math.log10(ratio)


Constraint = Union[None, str, tuple]


@dataclass(frozen=True)
class CtModelSpec:
    """Weights and structure of the L2+L1 data, TV, constrained model.

    The objective is (w1/2)||Ax - b||_2^2 + w2*||Ax - b||_1
    + tv_weight*TV(x) subject to x in C; w1 + w2 must equal 1. ``tv``
    selects the anisotropic ('atv') or isotropic ('itv') total
    variation. ``constraint`` is None, 'nonneg', or a (lo, hi) box.
    ``method`` 'I' keeps the constraint as a fourth composite term with
    an identity operator; 'II' handles it through the plain proximal
    term instead.
    """

    w1: float
    w2: float
    tv_weight: float
    tv: str = "atv"
    constraint: Constraint = "nonneg"
    method: str = "II"

    def __post_init__(self):
        if not (0.0 <= self.w1 <= 1.0 and 0.0 <= self.w2 <= 1.0):
            raise ValueError("w1 and w2 must lie in [0, 1]")
        if abs(self.w1 + self.w2 - 1.0) > 1e-12:
            raise ValueError(f"w1 + w2 must equal 1, got {self.w1 + self.w2}")
        if self.tv_weight <= 0:
            raise ValueError("tv_weight must be positive")
        if self.tv not in ("atv", "itv"):
            raise ValueError(f"tv must be 'atv' or 'itv', got {self.tv!r}")
        if self.method not in ("I", "II"):
            raise ValueError(f"method must be 'I' or 'II', got {self.method!r}")
        if self.constraint is not None and not isinstance(self.constraint, (str, tuple)):
            raise ValueError("constraint must be None, 'nonneg', or a (lo, hi) pair")
        if isinstance(self.constraint, str) and self.constraint != "nonneg":
            raise ValueError(f"unknown constraint {self.constraint!r}")


def _constraint_function(constraint: Constraint) -> Optional[ProxFunction]:
    if constraint is None:
        return None
    if constraint == "nonneg":
        return IndicatorNonneg()
    lo, hi = constraint
    return IndicatorBox(float(lo), float(hi))


def build_ct_problem(tomo: TomoProblem, model: CtModelSpec) -> Problem:
    """Assemble the solver problem for a CT data set under a model spec.

    Method I: G = 0 with terms (SqL2, A), (L1, A), (TV, D), (C, I); an
    absent constraint keeps the fourth term with the indicator of the
    whole space, so its dual stays identically zero. Method II: the
    constraint indicator becomes G and only the three data/TV terms
    remain.
    """
    n = tomo.geometry.n
    pixels = n * n
    b = tomo.projections
    data_l2 = SqL2(model.w1, shift=b)
    data_l1 = L1(model.w2, shift=b)
    if model.tv == "atv":
        tv_term: ProxFunction = L1(model.tv_weight)
    else:
        tv_term = GroupL12(model.tv_weight, pixels)
    terms = [(data_l2, tomo.system_matrix), (data_l1, tomo.system_matrix),
             (tv_term, grad_2d(n))]

    constraint = _constraint_function(model.constraint)
    if model.method == "I":
        if constraint is None:
            constraint = IndicatorBox(-math.inf, math.inf)
        terms.append((constraint, Identity(pixels)))
        return Problem(g=Zero(), terms=tuple(terms))
    return Problem(g=constraint if constraint is not None else Zero(),
                   terms=tuple(terms))


def write_pgm(path, pixels):
    """Write a square image vector (values in [0, 1]) as 16-bit binary PGM."""
    pixels = np.asarray(pixels, dtype=np.float64)
    n = math.isqrt(pixels.size)
    if n * n != pixels.size:
        raise ValueError(f"expected a square image, got {pixels.size} pixels")
    quantized = np.round(np.clip(pixels, 0.0, 1.0) * 65535.0).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{n} {n}\n65535\n".encode("ascii"))
        fh.write(quantized.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a 16-bit binary PGM back to a vector of values in [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"not a binary PGM file: magic {tokens[0]!r}")
    width, height, maxval = (int(t) for t in tokens[1:4])
    pos += 1  # single whitespace byte after the header
    data = np.frombuffer(raw, dtype=">u2" if maxval > 255 else "u1",
                         count=width * height, offset=pos)
    return data.astype(np.float64) / maxval


def write_vector_csv(path, v):
    """One value per line, 17 significant digits (exact double round trip)."""
    v = np.asarray(v, dtype=np.float64)
    with open(path, "w", newline="\n") as fh:
        for value in v:
            fh.write(f"{value:.17g}\n")


def read_vector_csv(path) -> np.ndarray:
    return np.loadtxt(path, dtype=np.float64, ndmin=1)
