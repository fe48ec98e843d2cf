"""27-element feature vectors, z-score normalization, and feature CSV I/O.

Layout (frozen; bump FEATURE_LAYOUT_VERSION on any change):

    0-8    gradient block, scale-major: [Var(GM), Var(RO), Var(RM)] at
           full, half, quarter scale
    9-10   GGD (alpha, beta) of the MSCN coefficients
    11-26  AGGD quadruples (shape, mean, beta_l, beta_r) for the paired
           product planes in H, V, D1, D2 order
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np

from . import gradients, mscn
from .errors import ParameterError
from .raster import require_plane

FEATURE_COUNT = 27
FEATURE_LAYOUT_VERSION = 1

# Standard-deviation floor for degenerate (constant) feature columns.
STD_FLOOR = 1e-12

_CSV_FLOAT = "{:.17g}"


@dataclass(frozen=True)
class FeatureConfig:
    """Extraction knobs echoed into model files so scores stay comparable."""

    derivative_sigma: float = gradients.DERIVATIVE_SIGMA
    derivative_radius: int = gradients.DERIVATIVE_RADIUS
    mscn_radius: int = mscn.MSCN_RADIUS
    mscn_sigma: float = mscn.MSCN_SIGMA

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(**{k: d[k] for k in ("derivative_sigma", "derivative_radius", "mscn_radius", "mscn_sigma") if k in d})


DEFAULT_CONFIG = FeatureConfig()


@dataclass(frozen=True)
class NormalizationStats:
    """Per-feature mean and (floored) population standard deviation."""

    mean: np.ndarray
    std: np.ndarray


def extract_features(plane: np.ndarray, config: FeatureConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Extract the full 27-element feature vector from a [0, 1] plane.

    Deterministic: the same plane always yields a bit-identical vector.
    Requires at least 64x64 (the quarter scale must admit the windows).
    """
    plane = require_plane(plane)
    grad_block = gradients.multiscale_gradient_features(
        plane, sigma=config.derivative_sigma, radius=config.derivative_radius
    )
    mscn_block = mscn.mscn_features(plane, radius=config.mscn_radius, sigma=config.mscn_sigma)
    return np.concatenate([grad_block, mscn_block])


def fit_normalizer(matrix: np.ndarray) -> NormalizationStats:
    """Per-column mean and population std over an N x 27 training matrix."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 2:
        raise ParameterError("need a 2-D matrix with at least 2 rows")
    mean = m.mean(axis=0)
    std = np.maximum(m.std(axis=0), STD_FLOOR)
    return NormalizationStats(mean=mean, std=std)


def apply_normalizer(values: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """z-score one vector or a row matrix with stored statistics."""
    return (np.asarray(values, dtype=np.float64) - stats.mean) / stats.std


def feature_header() -> list[str]:
    return ["path"] + [f"f{i:02d}" for i in range(FEATURE_COUNT)] + ["target"]


def write_features_csv(path, image_paths, matrix, targets) -> None:
    """Write feature rows as CSV with 17-significant-digit doubles."""
    matrix = np.asarray(matrix, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if matrix.shape != (len(image_paths), FEATURE_COUNT):
        raise ParameterError(
            f"feature matrix shape {matrix.shape} does not match "
            f"{len(image_paths)} paths x {FEATURE_COUNT}"
        )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(feature_header())
        for img_path, row, target in zip(image_paths, matrix, targets):
            writer.writerow(
                [str(img_path)]
                + [_CSV_FLOAT.format(v) for v in row]
                + [_CSV_FLOAT.format(target)]
            )


def read_features_csv(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Read a feature CSV back into (paths, N x 27 matrix, targets)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != feature_header():
            raise ParameterError(f"{path}: unexpected feature CSV header")
        paths, rows, targets = [], [], []
        for line in reader:
            if len(line) != FEATURE_COUNT + 2:
                raise ParameterError(f"{path}: row with {len(line)} fields")
            paths.append(line[0])
            rows.append([float(v) for v in line[1:-1]])
            targets.append(float(line[-1]))
    matrix = np.array(rows, dtype=np.float64).reshape(len(paths), FEATURE_COUNT)
    return paths, matrix, np.array(targets, dtype=np.float64)


def extract_many(paths, config: FeatureConfig = DEFAULT_CONFIG, jobs: int = 1):
    """Extract features for many images, preserving input order.

    Returns (matrix, errors) where errors is a list of (path, exception)
    for images that failed to load or extract; their rows are omitted from
    the matrix, so callers must align on the returned ok mask.
    """
    from concurrent.futures import ThreadPoolExecutor

    from .raster import load_grayscale

    def one(p):
        return extract_features(load_grayscale(p), config)

    results: list[np.ndarray | None] = [None] * len(paths)
    errors: list[tuple[str, Exception]] = []
    if jobs <= 1:
        for i, p in enumerate(paths):
            try:
                results[i] = one(p)
            except Exception as exc:  # collected per record, reported by callers
                errors.append((str(p), exc))
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(one, p) for p in paths]
            for i, fut in enumerate(futures):
                try:
                    results[i] = fut.result()
                except Exception as exc:
                    errors.append((str(paths[i]), exc))
    ok_rows = [r for r in results if r is not None]
    ok_mask = np.array([r is not None for r in results], dtype=bool)
    matrix = np.array(ok_rows, dtype=np.float64).reshape(len(ok_rows), FEATURE_COUNT)
    return matrix, ok_mask, errors
