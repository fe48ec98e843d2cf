"""Dataset manifests, rank/linear correlations, and per-class evaluation reports.

Predicted scores are compared to targets directly (no logistic remapping).
Ties get fractional ranks in Spearman and the tau-b correction in Kendall.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError, LayoutError, ParameterError
from .features import FeatureConfig, extract_features
from .network import NetworkModel, forward

DISTORTION_CLASSES = ("jp2k", "jpeg", "wn", "gblur", "fastfading", "pristine", "other")

_LIVE_FOLDERS = ("jp2k", "jpeg", "wn", "gblur", "fastfading")

MANIFEST_HEADER = ["path", "class", "level", "target", "reference_id"]


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    distortion_class: str
    level: float | None
    target: float
    reference_id: str | None = None


@dataclass(frozen=True)
class ClassResult:
    n: int
    pearson: float | None
    spearman: float | None
    kendall: float | None
    degenerate: bool = False  # too few or constant-target records


@dataclass
class EvaluationReport:
    per_class: dict[str, ClassResult]
    overall: ClassResult
    pairs: list[tuple[str, str, float, float]]  # (path, class, target, prediction)
    failures: list[tuple[str, str]]  # (path, error message)

    @property
    def coverage(self) -> float:
        total = len(self.pairs) + len(self.failures)
        return len(self.pairs) / total if total else 0.0


def write_manifest(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for r in records:
            writer.writerow(
                [
                    r.path,
                    r.distortion_class,
                    "" if r.level is None else f"{r.level:.17g}",
                    f"{r.target:.17g}",
                    r.reference_id or "",
                ]
            )


def read_manifest(path) -> list[ManifestRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise ParameterError(f"{path}: unexpected manifest header {header}")
        for i, line in enumerate(reader, start=2):
            if len(line) != 5:
                raise ParameterError(f"{path}:{i}: expected 5 fields, got {len(line)}")
            cls = line[1]
            if cls not in DISTORTION_CLASSES:
                raise ParameterError(f"{path}:{i}: unknown distortion class {cls!r}")
            target = float(line[3])
            if not np.isfinite(target):
                raise ParameterError(f"{path}:{i}: non-finite target")
            records.append(
                ManifestRecord(
                    path=line[0],
                    distortion_class=cls,
                    level=float(line[2]) if line[2] else None,
                    target=target,
                    reference_id=line[4] or None,
                )
            )
    if not records:
        raise ParameterError(f"{path}: empty manifest")
    paths = [r.path for r in records]
    if len(set(paths)) != len(paths):
        raise ParameterError(f"{path}: duplicate image paths in manifest")
    return records


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise DegenerateInputError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise DegenerateInputError("need at least 2 points")
    if np.min(x) == np.max(x) or np.min(y) == np.max(y):
        raise DegenerateInputError("constant sequence has no defined correlation")
    return x, y


def pearson(x, y) -> float:
    """Sample linear correlation coefficient."""
    x, y = _check_pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    return float((dx @ dy) / np.sqrt((dx @ dx) * (dy @ dy)))


def average_ranks(x) -> np.ndarray:
    """Ranks starting at 1; tied values share the average of their positions."""
    x = np.asarray(x, dtype=np.float64).ravel()
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Rank correlation: Pearson of fractional ranks."""
    x, y = _check_pair(x, y)
    return pearson(average_ranks(x), average_ranks(y))


def _tie_term(x: np.ndarray) -> float:
    _, counts = np.unique(x, return_counts=True)
    return float(np.sum(counts * (counts - 1)) / 2.0)


def kendall(x, y) -> float:
    """Kendall tau-b: pair concordance with tie corrections.

    tau_b = S / sqrt((n0 - t_x) * (n0 - t_y)) where S sums
    sign(x_j - x_i) * sign(y_j - y_i) over pairs i < j, n0 = n(n-1)/2, and
    t_x, t_y count tied pairs within each argument.
    """
    x, y = _check_pair(x, y)
    n = x.size
    sx = np.sign(x[:, None] - x[None, :])
    sy = np.sign(y[:, None] - y[None, :])
    s = float(np.sum(np.triu(sx * sy, k=1)))
    n0 = n * (n - 1) / 2.0
    return s / np.sqrt((n0 - _tie_term(x)) * (n0 - _tie_term(y)))


def _class_result(targets, preds) -> ClassResult:
    n = len(targets)
    if n < 3:
        return ClassResult(n=n, pearson=None, spearman=None, kendall=None, degenerate=True)
    try:
        return ClassResult(
            n=n,
            pearson=pearson(targets, preds),
            spearman=spearman(targets, preds),
            kendall=kendall(targets, preds),
        )
    except DegenerateInputError:
        return ClassResult(n=n, pearson=None, spearman=None, kendall=None, degenerate=True)


def evaluate(
    model: NetworkModel,
    manifest: list[ManifestRecord],
    config: FeatureConfig | None = None,
    root: Path | str | None = None,
    jobs: int = 1,
) -> EvaluationReport:
    """Score every manifest image and correlate predictions against targets.

    Uses the feature configuration echoed in the model file unless one is
    passed explicitly.  Relative manifest paths resolve against ``root``.
    Unreadable images are collected as failures rather than aborting.
    """
    from concurrent.futures import ThreadPoolExecutor

    from .raster import load_grayscale

    if config is None:
        config = FeatureConfig.from_dict(model.meta.get("feature_config", {}))

    def score(record: ManifestRecord) -> float:
        p = Path(record.path)
        if root is not None and not p.is_absolute():
            p = Path(root) / p
        return forward(model, extract_features(load_grayscale(p), config))

    outcomes: list[float | Exception] = []
    if jobs <= 1:
        for rec in manifest:
            try:
                outcomes.append(score(rec))
            except Exception as exc:  # captured per record
                outcomes.append(exc)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(score, rec) for rec in manifest]
            for fut in futures:
                try:
                    outcomes.append(fut.result())
                except Exception as exc:
                    outcomes.append(exc)
    pairs: list[tuple[str, str, float, float]] = []
    failures: list[tuple[str, str]] = []
    for rec, out in zip(manifest, outcomes):
        if isinstance(out, Exception):
            failures.append((rec.path, f"{type(out).__name__}: {out}"))
        else:
            pairs.append((rec.path, rec.distortion_class, rec.target, out))

    per_class: dict[str, ClassResult] = {}
    classes = sorted({c for _, c, _, _ in pairs})
    for cls in classes:
        t = [t for _, c, t, _ in pairs if c == cls]
        p = [p for _, c, _, p in pairs if c == cls]
        per_class[cls] = _class_result(np.array(t), np.array(p))
    all_t = np.array([t for _, _, t, _ in pairs])
    all_p = np.array([p for _, _, _, p in pairs])
    overall = _class_result(all_t, all_p)
    return EvaluationReport(per_class=per_class, overall=overall, pairs=pairs, failures=failures)


def report_table(report: EvaluationReport) -> str:
    """Render the per-class metric table (rows Pearson/Kendall/Spearman)."""
    classes = list(report.per_class.keys()) + ["All"]
    rows = {"Pearson": [], "Kendall": [], "Spearman": []}
    ns = []
    for cls in classes:
        res = report.overall if cls == "All" else report.per_class[cls]
        ns.append(res.n)
        for name, value in (
            ("Pearson", res.pearson),
            ("Kendall", res.kendall),
            ("Spearman", res.spearman),
        ):
            rows[name].append("   n/a" if value is None else f"{value:+.4f}")
    width = max(10, max(len(c) for c in classes) + 2)
    out = [" " * 9 + "".join(f"{c:>{width}}" for c in classes)]
    out.append(" " * 9 + "".join(f"{('n=' + str(n)):>{width}}" for n in ns))
    for name in ("Pearson", "Kendall", "Spearman"):
        out.append(f"{name:<9}" + "".join(f"{v:>{width}}" for v in rows[name]))
    if report.failures:
        out.append(f"failures: {len(report.failures)} (coverage {report.coverage:.1%})")
    return "\n".join(out)


def report_csv_rows(report: EvaluationReport) -> list[list[str]]:
    classes = list(report.per_class.keys()) + ["All"]
    header = ["metric"] + classes
    table = [header]
    for metric in ("pearson", "kendall", "spearman", "n"):
        row = [metric]
        for cls in classes:
            res = report.overall if cls == "All" else report.per_class[cls]
            v = getattr(res, metric)
            row.append("" if v is None else (str(v) if metric == "n" else f"{v:.17g}"))
        table.append(row)
    return table


def ingest_live_r2(root) -> list[ManifestRecord]:
    """Build a manifest from a LIVE release-2 style directory tree.

    Expects five distortion folders (jp2k, jpeg, wn, gblur, fastfading) of
    contiguously numbered imgN.bmp files plus dmos.mat (variables ``dmos``
    and ``orgs``) and refnames_all.mat (variable ``refnames_all``) giving
    the concatenated per-image scores and reference names in folder order.
    """
    from scipy.io import loadmat

    root = Path(root)
    if not root.is_dir():
        raise LayoutError(f"{root}: not a directory")
    missing = [f for f in _LIVE_FOLDERS if not (root / f).is_dir()]
    if missing:
        raise LayoutError(f"{root}: missing distortion folders: {', '.join(missing)}")
    for name in ("dmos.mat", "refnames_all.mat"):
        if not (root / name).is_file():
            raise LayoutError(f"{root}: missing scores file {name}")

    counts = {}
    for folder in _LIVE_FOLDERS:
        images = sorted((root / folder).glob("img*.bmp"))
        k = len(images)
        expected = {root / folder / f"img{i}.bmp" for i in range(1, k + 1)}
        if k == 0 or set(images) != expected:
            raise LayoutError(f"{root}/{folder}: expected contiguous img1..imgN.bmp files")
        counts[folder] = k
    total = sum(counts.values())

    dmos_doc = loadmat(root / "dmos.mat")
    if "dmos" not in dmos_doc:
        raise LayoutError(f"{root}/dmos.mat: no 'dmos' variable")
    dmos = np.asarray(dmos_doc["dmos"], dtype=np.float64).ravel()
    refs_doc = loadmat(root / "refnames_all.mat")
    if "refnames_all" not in refs_doc:
        raise LayoutError(f"{root}/refnames_all.mat: no 'refnames_all' variable")
    refnames = [str(np.squeeze(v)) for v in np.asarray(refs_doc["refnames_all"]).ravel()]
    if dmos.size != total or len(refnames) != total:
        raise LayoutError(
            f"{root}: scores length {dmos.size}/{len(refnames)} does not match "
            f"{total} images"
        )

    records = []
    i = 0
    for folder in _LIVE_FOLDERS:
        for k in range(1, counts[folder] + 1):
            records.append(
                ManifestRecord(
                    path=str(root / folder / f"img{k}.bmp"),
                    distortion_class=folder,
                    level=None,
                    target=float(dmos[i]),
                    reference_id=refnames[i],
                )
            )
            i += 1
    return records
