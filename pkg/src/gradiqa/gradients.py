"""Gradient-statistics features: magnitude, relative orientation, relative magnitude.

Three maps are computed from Gaussian-derivative responses of a plane:

* GM  = sqrt(Ix^2 + Iy^2), the gradient magnitude;
* RO  = atan2(Iy, Ix) - atan2(Iy_ave, Ix_ave), the gradient orientation
  relative to its 3x3 local average, wrapped into (-pi, pi];
* RM  = sqrt((Ix - Ix_ave)^2 + (Iy - Iy_ave)^2), the gradient magnitude
  relative to the same local average.

Each map is reduced to its population variance, at full, half, and quarter
scale, giving a 9-element block (scale-major, GM/RO/RM within each scale).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .raster import MIN_SIDE, convolve_same, downsample_half, require_plane

# Derivative filter defaults.  A small sigma keeps fine distortion structure;
# radius 2 captures >99.9% of the kernel mass at sigma = 0.5.
DERIVATIVE_SIGMA = 0.5
DERIVATIVE_RADIUS = 2

# Below this magnitude both derivative components count as zero and the
# orientation is defined as 0 instead of whatever atan2 noise would give.
_ZERO_GRAD = 1e-12

_BOX3 = np.full((3, 3), 1.0 / 9.0)


@dataclass(frozen=True)
class GradientMaps:
    """GM / RO / RM planes for one image scale (0 = full, 1 = half, 2 = quarter)."""

    gm: np.ndarray
    ro: np.ndarray
    rm: np.ndarray
    scale: int = 0


def gaussian_derivative_kernels(sigma: float, radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Sampled first-order Gaussian derivative filter pair (Kx, Ky).

    Ky(x, y) = -y / (2*pi*sigma^4) * exp(-(x^2 + y^2) / (2*sigma^2)) at
    integer offsets; Kx is its transpose.  The sample mean is subtracted so
    each kernel sums to zero, which makes the responses invariant to adding
    a constant to the plane.
    """
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    if radius < 1:
        raise ParameterError(f"radius must be >= 1, got {radius}")
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    x, y = np.meshgrid(offsets, offsets)  # x varies along columns, y down rows
    ky = -y / (2.0 * np.pi * sigma**4) * np.exp(-(x**2 + y**2) / (2.0 * sigma**2))
    ky -= ky.mean()
    kx = ky.T.copy()
    return kx, ky


def gradient_maps(
    plane: np.ndarray,
    sigma: float = DERIVATIVE_SIGMA,
    radius: int = DERIVATIVE_RADIUS,
    scale: int = 0,
) -> GradientMaps:
    """Compute the GM, RO, and RM maps of one plane."""
    plane = require_plane(plane, min_side=MIN_SIDE)
    kx, ky = gaussian_derivative_kernels(sigma, radius)
    ix = convolve_same(plane, kx)
    iy = convolve_same(plane, ky)
    ix_ave = convolve_same(ix, _BOX3)
    iy_ave = convolve_same(iy, _BOX3)

    gm = np.hypot(ix, iy)
    rm = np.hypot(ix - ix_ave, iy - iy_ave)

    theta = np.where(
        (np.abs(ix) < _ZERO_GRAD) & (np.abs(iy) < _ZERO_GRAD), 0.0, np.arctan2(iy, ix)
    )
    theta_ave = np.where(
        (np.abs(ix_ave) < _ZERO_GRAD) & (np.abs(iy_ave) < _ZERO_GRAD),
        0.0,
        np.arctan2(iy_ave, ix_ave),
    )
    ro = theta - theta_ave
    # Wrap the (-2pi, 2pi) difference into (-pi, pi].
    ro = np.where(ro > np.pi, ro - 2.0 * np.pi, ro)
    ro = np.where(ro <= -np.pi, ro + 2.0 * np.pi, ro)
    return GradientMaps(gm=gm, ro=ro, rm=rm, scale=scale)


def map_variance(values: np.ndarray) -> float:
    """Population variance of all values in a map."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ParameterError("cannot take the variance of an empty map")
    return float(np.var(arr))


def multiscale_gradient_features(
    plane: np.ndarray,
    sigma: float = DERIVATIVE_SIGMA,
    radius: int = DERIVATIVE_RADIUS,
) -> np.ndarray:
    """The 9-element gradient block: Var(GM), Var(RO), Var(RM) at 3 scales.

    Scales are full, half, and quarter (2x2 block-mean downsampling); the
    derivative sigma is reused unchanged at every scale.  Requires at least
    64x64 so the quarter-scale plane is still 16x16.
    """
    plane = require_plane(plane, min_side=4 * MIN_SIDE)
    features = np.empty(9)
    current = plane
    for s in range(3):
        maps = gradient_maps(current, sigma=sigma, radius=radius, scale=s)
        features[3 * s] = map_variance(maps.gm)
        features[3 * s + 1] = map_variance(maps.ro)
        features[3 * s + 2] = map_variance(maps.rm)
        if s < 2:
            current = downsample_half(current)
    return features
