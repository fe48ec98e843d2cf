"""Deterministic synthetic distortion generators and desk-scale dataset builder.

Four graded distortion kinds cover the common degradation families:

* ``gblur``      separable Gaussian blur, level = sigma in pixels
* ``wn``         additive white Gaussian noise, level = std in 8-bit units
* ``jpeg_block`` 8x8 block-DCT quantization of AC coefficients, level = step
* ``fade``       attenuation + blur + noise composite; a stand-in for
                 transmission fading, never comparable to codec-stream fading

Every generator is the identity at level 0 and deterministic given
(input, level, seed).  Dataset targets are a monotone severity proxy,
100 * (1 - exp(-level / half_severity)), not calibrated opinion scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import fft as sp_fft
from scipy import ndimage

from .errors import ParameterError
from .evaluation import ManifestRecord, write_manifest
from .raster import load_grayscale, require_plane, write_pgm

KINDS = ("gblur", "wn", "jpeg_block", "fade")

# Level at which the severity proxy reaches half its 0-100 range.
DEFAULT_HALF_SEVERITY = {"gblur": 1.5, "wn": 15.0, "jpeg_block": 0.35, "fade": 1.5}

# Manifest class tags for each synthetic kind.  The fade composite is an
# uncalibrated stand-in, so it is filed under "other" rather than a class
# that invites comparison with wireless-channel benchmarks.
KIND_TO_CLASS = {"gblur": "gblur", "wn": "wn", "jpeg_block": "jpeg", "fade": "other"}


@dataclass(frozen=True)
class DistortionSpec:
    kind: str
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown distortion kind {self.kind!r}")
        if self.level < 0:
            raise ParameterError(f"level must be >= 0, got {self.level}")


def _gaussian_taps(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def gaussian_blur(plane: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with radius ceil(3*sigma), replicate boundary."""
    plane = require_plane(plane)
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return plane.copy()
    taps = _gaussian_taps(sigma)
    out = ndimage.correlate1d(plane, taps, axis=0, mode="nearest")
    return ndimage.correlate1d(out, taps, axis=1, mode="nearest")


def add_white_noise(plane: np.ndarray, std_8bit: float, seed: int = 0) -> np.ndarray:
    """Seeded zero-mean Gaussian noise of std_8bit/255, clamped to [0, 1]."""
    plane = require_plane(plane)
    if std_8bit < 0:
        raise ParameterError(f"noise std must be >= 0, got {std_8bit}")
    if std_8bit == 0:
        return plane.copy()
    rng = np.random.default_rng(seed)
    noisy = plane + rng.normal(0.0, std_8bit / 255.0, size=plane.shape)
    return np.clip(noisy, 0.0, 1.0)


def jpeg_blockiness(plane: np.ndarray, coarseness: float) -> np.ndarray:
    """Block-DCT quantization artifacts.

    The plane is padded to a multiple of 8 (edge replication), transformed
    per 8x8 block with an orthonormal DCT-II, and the AC coefficients are
    snapped to a uniform grid of the given step.  DC passes through, so a
    very coarse step leaves each block as its flat DC reconstruction rather
    than darkening the image.
    """
    plane = require_plane(plane)
    if coarseness < 0:
        raise ParameterError(f"coarseness must be >= 0, got {coarseness}")
    h, w = plane.shape
    ph = (-h) % 8
    pw = (-w) % 8
    padded = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
    hb, wb = padded.shape[0] // 8, padded.shape[1] // 8
    blocks = padded.reshape(hb, 8, wb, 8)
    coeffs = sp_fft.dctn(blocks, type=2, axes=(1, 3), norm="ortho")
    if coarseness > 0:
        dc = coeffs[:, 0, :, 0].copy()
        coeffs = np.round(coeffs / coarseness) * coarseness
        coeffs[:, 0, :, 0] = dc
    restored = sp_fft.idctn(coeffs, type=2, axes=(1, 3), norm="ortho")
    out = restored.reshape(padded.shape)[:h, :w]
    return np.clip(out, 0.0, 1.0) if coarseness > 0 else out


def fade(plane: np.ndarray, level: float, seed: int = 0) -> np.ndarray:
    """Attenuation + blur + noise composite, severity scaled by one level."""
    plane = require_plane(plane)
    if level < 0:
        raise ParameterError(f"level must be >= 0, got {level}")
    if level == 0:
        return plane.copy()
    out = gaussian_blur(plane, 0.5 * level)
    out = out / (1.0 + 0.08 * level)
    return add_white_noise(out, 1.5 * level, seed=seed)


def apply_distortion(plane: np.ndarray, spec: DistortionSpec) -> np.ndarray:
    if spec.kind == "gblur":
        return gaussian_blur(plane, spec.level)
    if spec.kind == "wn":
        return add_white_noise(plane, spec.level, seed=spec.seed)
    if spec.kind == "jpeg_block":
        return jpeg_blockiness(plane, spec.level)
    return fade(plane, spec.level, seed=spec.seed)


def severity_target(kind: str, level: float, half_severity: dict | None = None) -> float:
    """Monotone proxy score in [0, 100); 0 means pristine."""
    half = (half_severity or DEFAULT_HALF_SEVERITY)[kind]
    return 100.0 * (1.0 - np.exp(-level / half))


def _record_seed(spec_seed: int, ref_index: int) -> int:
    # Distinct, run-stable noise stream per (spec, reference) pair.
    ss = np.random.SeedSequence((spec_seed, ref_index))
    return int(ss.generate_state(1)[0])


def generate_dataset(
    ref_paths,
    specs,
    out_dir,
    half_severity: dict | None = None,
) -> list[ManifestRecord]:
    """Write every (reference x spec) distorted image plus pristine copies.

    Images land in ``out_dir`` as PGM files along with ``manifest.csv``;
    regeneration with identical inputs is byte-identical.  Returns the
    manifest records (pristine rows first, then refs x specs in order).
    """
    if not ref_paths:
        raise ParameterError("need at least one reference image")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records: list[ManifestRecord] = []

    planes = [(Path(p).stem, load_grayscale(p)) for p in ref_paths]
    for stem, plane in planes:
        name = f"{stem}__pristine.pgm"
        write_pgm(plane, out_dir / name)
        records.append(
            ManifestRecord(
                path=name, distortion_class="pristine", level=0.0, target=0.0,
                reference_id=stem,
            )
        )
    for ref_index, (stem, plane) in enumerate(planes):
        for spec_index, spec in enumerate(specs):
            seeded = DistortionSpec(
                kind=spec.kind, level=spec.level, seed=_record_seed(spec.seed, ref_index)
            )
            distorted = apply_distortion(plane, seeded)
            name = f"{stem}__{spec.kind}_{spec_index:02d}.pgm"
            write_pgm(distorted, out_dir / name)
            records.append(
                ManifestRecord(
                    path=name,
                    distortion_class=KIND_TO_CLASS[spec.kind],
                    level=spec.level,
                    target=float(severity_target(spec.kind, spec.level, half_severity)),
                    reference_id=stem,
                )
            )
    write_manifest(records, out_dir / "manifest.csv")
    return records


def procedural_reference(index: int, height: int = 192, width: int = 192) -> np.ndarray:
    """Deterministic natural-statistics stand-in image for demos and tests.

    A random-phase field with a 1/f^1.45..1.75 amplitude spectrum (the
    classic natural-image surrogate: locally standardized luminance comes
    out close to Gaussian), plus a faint illumination ramp and sensor-like
    noise.  Different indices give different but reproducible content; real
    photographs remain preferable whenever available.
    """
    rng = np.random.default_rng(900_000 + index)
    slope = 1.45 + 0.3 * (index % 5) / 4.0
    phases = np.exp(2j * np.pi * rng.random((height, width)))
    freq = np.hypot(np.fft.fftfreq(height)[:, None], np.fft.fftfreq(width)[None, :])
    freq[0, 0] = 1.0
    spectrum = phases / freq**slope
    spectrum[0, 0] = 0.0
    acc = np.fft.ifft2(spectrum).real
    rows = np.linspace(0.0, 1.0, height)[:, None]
    cols = np.linspace(0.0, 1.0, width)[None, :]
    acc += acc.std() * 0.4 * (rows * (0.3 + 0.7 * (index % 3) / 2.0) - cols * (index % 4) / 3.0)
    lo, hi = acc.min(), acc.max()
    img = 0.05 + 0.90 * (acc - lo) / (hi - lo)
    img += rng.normal(0.0, 1.0 / 255.0, size=img.shape)
    return np.clip(img, 0.0, 1.0)
