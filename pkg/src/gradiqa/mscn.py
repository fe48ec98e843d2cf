"""Locally normalized luminance statistics and generalized-Gaussian fits.

The MSCN transform standardizes each pixel against a 7x7 Gaussian-weighted
local mean and deviation:  m = (I - mu) / (sigma + 1), with I on a 0-255
scale so the +1 stabilizer matches 8-bit dynamic range.  For a clean natural
image m is close to unit Gaussian; distortion bends it away, which the
fitted shape/scale parameters pick up:

* a symmetric generalized Gaussian fit of the MSCN coefficients (2 features);
* asymmetric generalized Gaussian fits of the four adjacent-pair product
  planes H, V, D1, D2 (4 x 4 features).

Both fits use moment matching: the ratio (E|x|)^2 / E[x^2] is inverted
against a precomputed monotone grid of the shape parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import FitError
from .raster import MIN_SIDE, convolve_same, require_plane

# 7x7 circularly symmetric Gaussian window, unit sum.
MSCN_RADIUS = 3
MSCN_SIGMA = 7.0 / 6.0

# MSCN operates on 0-255-scaled intensities; the internal [0, 1] planes are
# multiplied up first so the +1 in the denominator keeps its 8-bit meaning.
EIGHT_BIT_SCALE = 255.0

# Shape-parameter search grid.  Out-of-range moment ratios clamp to the ends
# and set the `clamped` flag on the returned parameters.
SHAPE_GRID_LO = 0.05
SHAPE_GRID_HI = 10.0
SHAPE_GRID_STEP = 0.001

_MIN_SAMPLES = 100


@dataclass(frozen=True)
class GgdParams:
    """Symmetric generalized Gaussian: density ~ exp(-(|x|/beta)^alpha)."""

    alpha: float
    beta: float
    clamped: bool = False


@dataclass(frozen=True)
class AggdParams:
    """Zero-mode asymmetric generalized Gaussian with per-side scales."""

    gamma_shape: float
    mean: float
    beta_l: float
    beta_r: float
    clamped: bool = False


def _gamma(x: np.ndarray | float) -> np.ndarray | float:
    return np.exp(gammaln(x))


def _build_shape_grid() -> tuple[np.ndarray, np.ndarray]:
    n = int(round((SHAPE_GRID_HI - SHAPE_GRID_LO) / SHAPE_GRID_STEP)) + 1
    alphas = np.linspace(SHAPE_GRID_LO, SHAPE_GRID_HI, n)
    # rho(a) = Gamma(2/a)^2 / (Gamma(1/a) * Gamma(3/a)), strictly increasing.
    rho = np.exp(2.0 * gammaln(2.0 / alphas) - gammaln(1.0 / alphas) - gammaln(3.0 / alphas))
    if not np.all(np.diff(rho) > 0):
        raise AssertionError("shape-ratio grid is not strictly monotone")
    return alphas, rho


_ALPHAS, _RHOS = _build_shape_grid()


def lookup_shape(rho_hat: float) -> tuple[float, bool]:
    """Invert the moment ratio to the nearest grid shape value.

    Returns (shape, clamped); clamped means rho_hat fell outside the grid
    range and the boundary value was returned.
    """
    if rho_hat <= _RHOS[0]:
        return float(_ALPHAS[0]), bool(rho_hat < _RHOS[0])
    if rho_hat >= _RHOS[-1]:
        return float(_ALPHAS[-1]), bool(rho_hat > _RHOS[-1])
    idx = int(np.searchsorted(_RHOS, rho_hat))
    if rho_hat - _RHOS[idx - 1] <= _RHOS[idx] - rho_hat:
        idx -= 1
    return float(_ALPHAS[idx]), False


def gaussian_window(radius: int = MSCN_RADIUS, sigma: float = MSCN_SIGMA) -> np.ndarray:
    """Circularly symmetric Gaussian kernel normalized to unit sum."""
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    x, y = np.meshgrid(offsets, offsets)
    w = np.exp(-(x**2 + y**2) / (2.0 * sigma**2))
    return w / w.sum()


def mscn(plane: np.ndarray, radius: int = MSCN_RADIUS, sigma: float = MSCN_SIGMA) -> np.ndarray:
    """Mean-subtracted contrast-normalized coefficients of a [0, 1] plane.

    mu and sigma are Gaussian-weighted local mean and standard deviation;
    the local variance is floored at zero before the square root.
    """
    plane = require_plane(plane, min_side=MIN_SIDE)
    window = gaussian_window(radius, sigma)
    scaled = plane * EIGHT_BIT_SCALE
    mu = convolve_same(scaled, window)
    var = convolve_same(scaled * scaled, window) - mu * mu
    local_sd = np.sqrt(np.maximum(var, 0.0))
    return (scaled - mu) / (local_sd + 1.0)


def paired_products(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Products of adjacent MSCN coefficients along H, V, D1, D2 shifts.

    H(i,j) = m(i,j)*m(i,j+1); V(i,j) = m(i,j)*m(i+1,j);
    D1(i,j) = m(i,j)*m(i+1,j+1); D2(i,j) = m(i,j)*m(i+1,j-1).
    Each plane shrinks by the row/column its shift consumes.
    """
    m = require_plane(m, min_side=2)
    h = m[:, :-1] * m[:, 1:]
    v = m[:-1, :] * m[1:, :]
    d1 = m[:-1, :-1] * m[1:, 1:]
    d2 = m[:-1, 1:] * m[1:, :-1]
    return h, v, d1, d2


def fit_ggd(samples: np.ndarray) -> GgdParams:
    """Moment-matching fit of a zero-mean symmetric generalized Gaussian."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < _MIN_SAMPLES:
        raise FitError(f"need at least {_MIN_SAMPLES} samples, got {x.size}")
    if np.min(x) == np.max(x):
        raise FitError("samples are all identical; shape is unidentifiable")
    e2 = float(np.mean(x * x))
    e_abs = float(np.mean(np.abs(x)))
    rho_hat = e_abs * e_abs / e2
    alpha, clamped = lookup_shape(rho_hat)
    beta = float(np.sqrt(e2 * _gamma(1.0 / alpha) / _gamma(3.0 / alpha)))
    return GgdParams(alpha=alpha, beta=beta, clamped=clamped)


def fit_aggd(samples: np.ndarray) -> AggdParams:
    """Moment-matching fit of a zero-mode asymmetric generalized Gaussian.

    Side deviations come from the second moments of the negative and
    non-negative halves; their ratio corrects the global moment ratio before
    the shape lookup, and the mean follows from the fitted per-side scales.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < _MIN_SAMPLES:
        raise FitError(f"need at least {_MIN_SAMPLES} samples, got {x.size}")
    neg = x[x < 0]
    pos = x[x >= 0]
    if neg.size == 0 or pos.size == 0:
        raise FitError("one-sided samples; need both negative and non-negative values")
    sigma_l = float(np.sqrt(np.mean(neg * neg)))
    sigma_r = float(np.sqrt(np.mean(pos * pos)))
    if sigma_l == 0.0 or sigma_r == 0.0:
        raise FitError("one side of the samples is identically zero")
    gamma_hat = sigma_l / sigma_r
    e2 = float(np.mean(x * x))
    e_abs = float(np.mean(np.abs(x)))
    r_hat = e_abs * e_abs / e2
    big_r = r_hat * (gamma_hat**3 + 1.0) * (gamma_hat + 1.0) / (gamma_hat**2 + 1.0) ** 2
    nu, clamped = lookup_shape(big_r)
    scale_factor = float(np.sqrt(_gamma(1.0 / nu) / _gamma(3.0 / nu)))
    beta_l = sigma_l * scale_factor
    beta_r = sigma_r * scale_factor
    mean = (beta_r - beta_l) * float(_gamma(2.0 / nu) / _gamma(1.0 / nu))
    return AggdParams(gamma_shape=nu, mean=mean, beta_l=beta_l, beta_r=beta_r, clamped=clamped)


def mscn_features(
    plane: np.ndarray, radius: int = MSCN_RADIUS, sigma: float = MSCN_SIGMA
) -> np.ndarray:
    """The 18-element block: GGD (alpha, beta) of the MSCN plane, then an
    AGGD quadruple (shape, mean, beta_l, beta_r) per product plane H, V, D1, D2."""
    m = mscn(plane, radius=radius, sigma=sigma)
    ggd = fit_ggd(m)
    out = [ggd.alpha, ggd.beta]
    for product in paired_products(m):
        aggd = fit_aggd(product)
        out.extend([aggd.gamma_shape, aggd.mean, aggd.beta_l, aggd.beta_r])
    return np.array(out)
