"""Independent straight-line oracles, deliberately sharing no code with the package.

Everything here is written with explicit loops and plain formulas so package
results can be checked against a second, dumb-but-obvious computation.
"""

import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import gamma as _gamma


def _clamp(v, lo, hi):
    return lo if v < lo else (hi if v > hi else v)


def _conv_replicate(plane, taps, radius):
    """out(i,j) = sum taps[k+r][l+r] * plane(i-k, j-l), edges replicated."""
    h = len(plane)
    w = len(plane[0])
    out = [[0.0] * w for _ in range(h)]
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for k in range(-radius, radius + 1):
                for l in range(-radius, radius + 1):
                    si = _clamp(i - k, 0, h - 1)
                    sj = _clamp(j - l, 0, w - 1)
                    acc += taps[k + radius][l + radius] * plane[si][sj]
            out[i][j] = acc
    return out


def gradient_block_oracle(plane, sigma=0.5, radius=2):
    """[Var(GM), Var(RO), Var(RM)] of one plane, by direct evaluation."""
    plane = [[float(v) for v in row] for row in np.asarray(plane)]
    h, w = len(plane), len(plane[0])

    size = 2 * radius + 1
    ky = [[0.0] * size for _ in range(size)]
    for y in range(-radius, radius + 1):
        for x in range(-radius, radius + 1):
            ky[y + radius][x + radius] = (
                -y / (2.0 * math.pi * sigma**4) * math.exp(-(x * x + y * y) / (2.0 * sigma**2))
            )
    mean_tap = sum(sum(row) for row in ky) / size**2
    ky = [[v - mean_tap for v in row] for row in ky]
    kx = [[ky[b][a] for b in range(size)] for a in range(size)]

    ix = _conv_replicate(plane, kx, radius)
    iy = _conv_replicate(plane, ky, radius)
    box = [[1.0 / 9.0] * 3 for _ in range(3)]
    ix_ave = _conv_replicate(ix, box, 1)
    iy_ave = _conv_replicate(iy, box, 1)

    eps = 1e-12
    gm, ro, rm = [], [], []
    for i in range(h):
        for j in range(w):
            a, b = ix[i][j], iy[i][j]
            aa, bb = ix_ave[i][j], iy_ave[i][j]
            gm.append(math.sqrt(a * a + b * b))
            rm.append(math.sqrt((a - aa) ** 2 + (b - bb) ** 2))
            th = 0.0 if (abs(a) < eps and abs(b) < eps) else math.atan2(b, a)
            th_ave = 0.0 if (abs(aa) < eps and abs(bb) < eps) else math.atan2(bb, aa)
            d = th - th_ave
            if d > math.pi:
                d -= 2.0 * math.pi
            elif d <= -math.pi:
                d += 2.0 * math.pi
            ro.append(d)

    def variance(vals):
        n = len(vals)
        m = sum(vals) / n
        return sum(v * v for v in vals) / n - m * m

    return [variance(gm), variance(ro), variance(rm)]


def kendall_enumeration(x, y):
    """Tau-b by explicit enumeration of all pairs."""
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    n = len(x)
    concordant_minus_discordant = 0
    tx = 0
    ty = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = (x[j] > x[i]) - (x[j] < x[i])
            dy = (y[j] > y[i]) - (y[j] < y[i])
            concordant_minus_discordant += dx * dy
            if dx == 0:
                tx += 1
            if dy == 0:
                ty += 1
    n0 = n * (n - 1) / 2.0
    return concordant_minus_discordant / math.sqrt((n0 - tx) * (n0 - ty))


def sample_aggd(nu, beta_l, beta_r, n, rng):
    """Draw from the two-sided density ~ exp(-(|x|/beta_side)^nu).

    Side chosen with probability beta_l/(beta_l+beta_r) for the negative
    side; magnitudes are beta * G^(1/nu) with G ~ Gamma(1/nu, 1).
    """
    sides = rng.random(n) < beta_l / (beta_l + beta_r)
    mags = rng.gamma(1.0 / nu, 1.0, size=n) ** (1.0 / nu)
    return np.where(sides, -beta_l * mags, beta_r * mags)


def aggd_mean_direct(product_plane):
    """AGGD mean estimate via root-finding instead of a lookup grid."""
    x = np.asarray(product_plane, dtype=np.float64).ravel()
    sigma_l = math.sqrt(float(np.mean(x[x < 0] ** 2)))
    sigma_r = math.sqrt(float(np.mean(x[x >= 0] ** 2)))
    gamma_hat = sigma_l / sigma_r
    r_hat = float(np.mean(np.abs(x))) ** 2 / float(np.mean(x**2))
    big_r = r_hat * (gamma_hat**3 + 1) * (gamma_hat + 1) / (gamma_hat**2 + 1) ** 2

    def rho(a):
        return _gamma(2.0 / a) ** 2 / (_gamma(1.0 / a) * _gamma(3.0 / a)) - big_r

    nu = brentq(rho, 0.05, 10.0)
    conv = math.sqrt(_gamma(1.0 / nu) / _gamma(3.0 / nu))
    return (sigma_r - sigma_l) * conv * _gamma(2.0 / nu) / _gamma(1.0 / nu)
