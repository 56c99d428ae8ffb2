"""Gramian angular field encoding of 1D spectra.

A pixel spectrum is min-max normalized against the whole cube, mapped to
polar coordinates (angle = arccos of the normalized value, radius = band
index fraction), and expanded into two matrices: the summation field
cos(phi_i + phi_j) and the difference field sin(phi_i - phi_j). Both are
resized to the configured side length by 2D piecewise-aggregate block
averaging (or bilinear interpolation when growing) and stacked as two
channels.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class PolarSpectrum:
    phi: np.ndarray          # angles in [0, pi/2]
    r: np.ndarray            # radii j/B, strictly increasing
    source_min: float
    source_max: float


@dataclass
class GafSample:
    gasf: np.ndarray         # S x S, symmetric
    gadf: np.ndarray         # S x S, antisymmetric with zero diagonal
    label: int

    @property
    def side(self):
        return self.gasf.shape[0]

    def channels(self):
        """Stack as a [2, S, S] array: summation field first."""
        return np.stack([self.gasf, self.gadf])


def normalize(spectrum, cube_min, cube_max):
    """Affine map into [0, 1] using the global cube extrema."""
    if cube_max <= cube_min:
        raise ValueError(f"degenerate cube: cube_max ({cube_max}) must exceed cube_min ({cube_min})")
    x = (np.asarray(spectrum, dtype=np.float64) - cube_min) / (cube_max - cube_min)
    return np.clip(x, 0.0, 1.0)


def to_polar(normalized):
    x = np.asarray(normalized, dtype=np.float64)
    if x.min() < -1e-9 or x.max() > 1 + 1e-9:
        raise ValueError(f"normalized values outside [0, 1]: range [{x.min()}, {x.max()}]")
    x = np.clip(x, 0.0, 1.0)
    b = x.shape[0]
    return PolarSpectrum(phi=np.arccos(x), r=np.arange(1, b + 1) / b,
                         source_min=0.0, source_max=1.0)


def gasf(normalized):
    """Summation field cos(phi_i + phi_j) = x_i x_j - sqrt(1-x_i^2) sqrt(1-x_j^2)."""
    x = np.clip(np.asarray(normalized, dtype=np.float64), 0.0, 1.0)
    s = np.sqrt(1.0 - x * x)
    return np.outer(x, x) - np.outer(s, s)


def gadf(normalized):
    """Difference field sin(phi_i - phi_j) = sqrt(1-x_i^2) x_j - x_i sqrt(1-x_j^2)."""
    x = np.clip(np.asarray(normalized, dtype=np.float64), 0.0, 1.0)
    s = np.sqrt(1.0 - x * x)
    return np.outer(s, x) - np.outer(x, s)


def gasf_trig(normalized):
    """Trigonometric form of the summation field, for cross-validation."""
    phi = to_polar(normalized).phi
    return np.cos(phi[:, None] + phi[None, :])


def gadf_trig(normalized):
    """Trigonometric form of the difference field, for cross-validation."""
    phi = to_polar(normalized).phi
    return np.sin(phi[:, None] - phi[None, :])


def resize_gaf(matrix, target_side):
    """Resize a B x B field to S x S.

    Shrinking uses piecewise-aggregate block means over near-equal index
    blocks [floor(b*B/S), floor((b+1)*B/S)); growing uses bilinear
    interpolation; equal sides return an unchanged copy.
    """
    if target_side <= 0:
        raise ValueError(f"target side must be positive, got {target_side}")
    m = np.asarray(matrix, dtype=np.float64)
    b = m.shape[0]
    s = int(target_side)
    if s == b:
        return m.copy()
    if s < b:
        edges = (np.arange(s + 1) * b) // s
        counts = np.diff(edges).astype(np.float64)
        rows = np.add.reduceat(m, edges[:-1], axis=0) / counts[:, None]
        return np.add.reduceat(rows, edges[:-1], axis=1) / counts[None, :]
    # bilinear upsizing
    if b == 1:
        return np.full((s, s), m[0, 0])
    coords = np.arange(s) * (b - 1) / (s - 1)
    i0 = np.minimum(coords.astype(int), b - 2)
    f = coords - i0
    rows = m[i0] * (1 - f)[:, None] + m[i0 + 1] * f[:, None]
    return rows[:, i0] * (1 - f)[None, :] + rows[:, i0 + 1] * f[None, :]


def encode_pixel(spectrum, label, cube_min, cube_max, side):
    """Full pipeline: normalize, build both fields, resize, stack."""
    x = normalize(spectrum, cube_min, cube_max)
    return GafSample(gasf=resize_gaf(gasf(x), side),
                     gadf=resize_gaf(gadf(x), side),
                     label=int(label))
