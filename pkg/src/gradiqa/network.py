"""Feedforward 27-30-1 regression network trained by scaled conjugate gradient.

The network is tanh-hidden / identity-output and is always handled through a
flat parameter vector in the order [w1 row-major, b1, w2, b2] (871 entries
for the default topology).  Training is full-batch Moller SCG with
validation-based early stopping; the returned model is the snapshot from the
best validation epoch, with the feature normalizer (fitted on the training
split only) embedded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DatasetError,
    DivergenceError,
    ModelFormatError,
    ParameterError,
)
from .features import FEATURE_COUNT, NormalizationStats, apply_normalizer, fit_normalizer

DEFAULT_HIDDEN = 30
MODEL_FORMAT_VERSION = 1

# Training halts outright once the full-batch gradient is this small.
GRADIENT_TOL = 1e-10


@dataclass
class TrainConfig:
    max_epochs: int = 2000
    max_validation_failures: int = 6
    train_frac: float = 0.70
    val_frac: float = 0.15
    test_frac: float = 0.15
    seed: int = 0
    scg_sigma: float = 5e-5
    scg_lambda: float = 5e-7
    split_mode: str = "random"  # "random" rows or "content" (group-disjoint)

    def validate(self) -> None:
        if self.max_epochs < 1:
            raise ParameterError("max_epochs must be >= 1")
        if self.max_validation_failures < 1:
            raise ParameterError("max_validation_failures must be >= 1")
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if min(fracs) < 0 or self.train_frac <= 0 or self.val_frac <= 0:
            raise ParameterError("train and validation fractions must be positive")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ParameterError(f"split fractions sum to {sum(fracs)}, not 1")
        if self.split_mode not in ("random", "content"):
            raise ParameterError(f"unknown split_mode {self.split_mode!r}")


@dataclass
class NetworkModel:
    w1: np.ndarray  # (n_hidden, n_in)
    b1: np.ndarray  # (n_hidden,)
    w2: np.ndarray  # (n_hidden,)
    b2: float
    norm: NormalizationStats
    meta: dict = field(default_factory=dict)
    hidden_activation: str = "tanh"
    output_activation: str = "identity"

    def __post_init__(self):
        n_hidden, n_in = self.w1.shape
        if self.b1.shape != (n_hidden,) or self.w2.shape != (n_hidden,):
            raise ParameterError(
                f"inconsistent layer shapes: w1 {self.w1.shape}, "
                f"b1 {self.b1.shape}, w2 {self.w2.shape}"
            )
        expected = n_hidden * n_in + 2 * n_hidden + 1
        assert self.n_params == expected  # 871 for the default 27-30-1

    @property
    def n_in(self) -> int:
        return self.w1.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def n_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + 1


@dataclass
class TrainHistory:
    train_mse: np.ndarray
    val_mse: np.ndarray
    test_mse: np.ndarray
    grad_norm: np.ndarray
    best_epoch: int
    stop_reason: str
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray

    @property
    def epochs(self) -> int:
        return len(self.train_mse)


def init_weights(seed, n_in: int = FEATURE_COUNT, n_hidden: int = DEFAULT_HIDDEN):
    """Seeded uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] weights, zero biases."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lim1 = 1.0 / np.sqrt(n_in)
    lim2 = 1.0 / np.sqrt(n_hidden)
    w1 = rng.uniform(-lim1, lim1, size=(n_hidden, n_in))
    b1 = np.zeros(n_hidden)
    w2 = rng.uniform(-lim2, lim2, size=n_hidden)
    b2 = 0.0
    return w1, b1, w2, b2


def pack_params(w1, b1, w2, b2) -> np.ndarray:
    return np.concatenate([np.ravel(w1), b1, np.ravel(w2), [b2]])


def unpack_params(theta: np.ndarray, n_in: int, n_hidden: int):
    expected = n_hidden * n_in + 2 * n_hidden + 1
    if theta.size != expected:
        raise ParameterError(f"parameter vector has {theta.size} entries, expected {expected}")
    pos = n_hidden * n_in
    w1 = theta[:pos].reshape(n_hidden, n_in)
    b1 = theta[pos : pos + n_hidden]
    w2 = theta[pos + n_hidden : pos + 2 * n_hidden]
    b2 = float(theta[-1])
    return w1, b1, w2, b2


def _forward_batch(theta: np.ndarray, xn: np.ndarray, n_in: int, n_hidden: int) -> np.ndarray:
    w1, b1, w2, b2 = unpack_params(theta, n_in, n_hidden)
    h = np.tanh(xn @ w1.T + b1)
    return h @ w2 + b2


def _loss_and_grad(theta: np.ndarray, xn: np.ndarray, t: np.ndarray, n_in: int, n_hidden: int):
    """Batch MSE and its exact gradient w.r.t. the flat parameter vector."""
    w1, b1, w2, b2 = unpack_params(theta, n_in, n_hidden)
    h = np.tanh(xn @ w1.T + b1)  # (n, hidden)
    y = h @ w2 + b2
    e = y - t
    n = t.size
    mse = float(e @ e) / n
    c = (2.0 / n) * e  # dMSE/dy
    gw2 = c @ h
    gb2 = float(np.sum(c))
    da1 = np.outer(c, w2) * (1.0 - h * h)  # back through tanh
    gw1 = da1.T @ xn
    gb1 = da1.sum(axis=0)
    return mse, pack_params(gw1, gb1, gw2, gb2)


def forward(model: NetworkModel, raw_features: np.ndarray) -> float:
    """Score one raw (unnormalized) feature vector."""
    raw = np.asarray(raw_features, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise ParameterError("feature vector contains non-finite values")
    z = apply_normalizer(raw, model.norm)
    h = np.tanh(model.w1 @ z + model.b1)
    return float(model.w2 @ h + model.b2)


def predict_batch(model: NetworkModel, raw_matrix: np.ndarray) -> np.ndarray:
    """Score an (n, n_in) matrix of raw feature rows."""
    zn = apply_normalizer(np.asarray(raw_matrix, dtype=np.float64), model.norm)
    h = np.tanh(zn @ model.w1.T + model.b1)
    return h @ model.w2 + model.b2


def loss_and_gradient(model: NetworkModel, features: np.ndarray, targets: np.ndarray):
    """MSE over a batch of raw feature rows and its 871-entry gradient."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    t = np.atleast_1d(np.asarray(targets, dtype=np.float64))
    if x.shape[0] == 0:
        raise ParameterError("empty batch")
    xn = apply_normalizer(x, model.norm)
    theta = pack_params(model.w1, model.b1, model.w2, model.b2)
    return _loss_and_grad(theta, xn, t, model.n_in, model.n_hidden)


class ScgOptimizer:
    """Moller's scaled conjugate gradient over fun(theta) -> (loss, grad).

    Hessian-vector products are approximated by a one-sided gradient
    difference along the search direction; the Levenberg-style lambda term
    keeps the quadratic model positive definite, growing on poor quadratic
    agreement and shrinking on good agreement.
    """

    def __init__(self, fun_grad, theta0: np.ndarray, sigma: float = 5e-5,
                 lambda_init: float = 5e-7):
        self.fun = fun_grad
        self.sigma0 = float(sigma)
        self.theta = np.array(theta0, dtype=np.float64)
        self.n = self.theta.size
        self.loss, self.grad = fun_grad(self.theta)
        self.r = -self.grad
        self.p = self.r.copy()
        self.delta = 0.0
        self.lambda_ = float(lambda_init)
        self.lambda_bar = 0.0
        self.success = True
        self.k = 0

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.grad))

    def step(self):
        """One SCG iteration.  Returns (loss, grad_norm) at the (possibly
        unchanged) current point; a step that fails the quadratic-agreement
        test leaves theta in place and raises the damping instead."""
        p, r = self.p, self.r
        p2 = float(p @ p)
        if p2 == 0.0:
            return self.loss, self.grad_norm

        if self.success:
            sigma_k = self.sigma0 / np.sqrt(p2)
            _, grad_probe = self.fun(self.theta + sigma_k * p)
            self.delta = float(p @ (grad_probe - self.grad)) / sigma_k

        delta = self.delta + (self.lambda_ - self.lambda_bar) * p2
        if delta <= 0.0:  # force the local quadratic model positive definite
            self.lambda_bar = 2.0 * (self.lambda_ - delta / p2)
            delta = -delta + self.lambda_ * p2
            self.lambda_ = self.lambda_bar
        self.delta = delta

        mu = float(p @ r)
        if mu <= 0.0:  # stale conjugate direction; restart on steepest descent
            self.p = self.r.copy()
            self.success = True
            self.k += 1
            return self.loss, self.grad_norm

        alpha = mu / delta
        candidate = self.theta + alpha * p
        loss_c, grad_c = self.fun(candidate)
        if not np.isfinite(loss_c):
            # quadratic model useless out here; boost damping and retry
            self.lambda_ *= 4.0
            self.lambda_bar = self.lambda_
            self.success = False
            self.k += 1
            return self.loss, self.grad_norm

        comparison = 2.0 * delta * (self.loss - loss_c) / mu**2
        if comparison >= 0.0:
            r_old = r
            self.theta = candidate
            self.loss = loss_c
            self.grad = grad_c
            r_new = -grad_c
            self.lambda_bar = 0.0
            self.success = True
            self.k += 1
            if self.k % self.n == 0:  # periodic restart keeps directions fresh
                self.p = r_new.copy()
            else:
                beta = float(r_new @ r_new - r_new @ r_old) / mu
                self.p = r_new + beta * p
            self.r = r_new
            if comparison >= 0.75:
                self.lambda_ *= 0.25
        else:
            self.lambda_bar = self.lambda_
            self.success = False
            self.k += 1
        if comparison < 0.25:
            self.lambda_ += delta * (1.0 - comparison) / p2
        return self.loss, self.grad_norm


def _split_sizes(n: int, cfg: TrainConfig) -> tuple[int, int]:
    n_train = int(n * cfg.train_frac)
    n_val = int(n * cfg.val_frac)
    if n_train < 2 or n_val < 1:
        raise DatasetError(f"{n} rows split into train={n_train}, val={n_val}; too few")
    return n_train, n_val

def split_indices(n: int, cfg: TrainConfig, rng: np.random.Generator, groups=None):
    """Shuffled train/val/test row indices, random-row or group-disjoint."""
    if cfg.split_mode == "content":
        if groups is None:
            raise DatasetError("content-disjoint split requires group labels")
        groups = np.asarray(groups)
        if groups.shape != (n,):
            raise DatasetError(f"groups must have shape ({n},), got {groups.shape}")
        n_train, n_val = _split_sizes(n, cfg)
        want = [n_train, n_val, n - n_train - n_val]
        buckets: list[list[int]] = [[], [], []]
        unique = sorted(set(groups.tolist()))
        for g in rng.permutation(len(unique)):
            rows = np.flatnonzero(groups == unique[int(g)])
            deficits = [want[i] - len(buckets[i]) for i in range(3)]
            buckets[int(np.argmax(deficits))].extend(rows.tolist())
        idx = [np.array(sorted(b), dtype=np.intp) for b in buckets]
        if len(idx[0]) < 2 or len(idx[1]) < 1:
            raise DatasetError("content-disjoint split left train or validation empty")
        return idx[0], idx[1], idx[2]

    perm = rng.permutation(n)
    n_train, n_val = _split_sizes(n, cfg)
    return (
        perm[:n_train],
        perm[n_train : n_train + n_val],
        perm[n_train + n_val :],
    )


def train_scg(
    features: np.ndarray,
    targets: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    groups=None,
    n_hidden: int = DEFAULT_HIDDEN,
    meta: dict | None = None,
):
    """Train the network; returns (best-validation model, history).

    Rows are shuffled and split with cfg.seed; the feature normalizer is
    fitted on the training split only.  One epoch = one full-batch SCG
    iteration.  Stops on max_epochs, a tiny gradient, or after
    max_validation_failures consecutive epochs without a new validation best.
    """
    cfg.validate()
    x = np.asarray(features, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != t.size:
        raise DatasetError(f"features {x.shape} do not match {t.size} targets")
    n, n_in = x.shape
    if n < 20:
        raise DatasetError(f"need at least 20 rows to train, got {n}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
        raise DatasetError("features/targets contain non-finite values")

    rng = np.random.default_rng(cfg.seed)
    train_idx, val_idx, test_idx = split_indices(n, cfg, rng, groups)
    norm = fit_normalizer(x[train_idx])
    xn = apply_normalizer(x, norm)

    theta0 = pack_params(*init_weights(rng, n_in, n_hidden))

    def fun(theta):
        return _loss_and_grad(theta, xn[train_idx], t[train_idx], n_in, n_hidden)

    def subset_mse(theta, idx):
        if len(idx) == 0:
            return float("nan")
        e = _forward_batch(theta, xn[idx], n_in, n_hidden) - t[idx]
        return float(e @ e) / len(idx)

    opt = ScgOptimizer(fun, theta0, sigma=cfg.scg_sigma, lambda_init=cfg.scg_lambda)
    hist_train, hist_val, hist_test, hist_gnorm = [], [], [], []
    best_val = np.inf
    best_theta = opt.theta.copy()
    best_epoch = 0
    failures = 0
    stop_reason = "max_epochs"
    for epoch in range(1, cfg.max_epochs + 1):
        train_mse, grad_norm = opt.step()
        if not np.isfinite(train_mse):
            raise DivergenceError(
                f"training loss became non-finite at epoch {epoch}",
                history=_make_history(hist_train, hist_val, hist_test, hist_gnorm,
                                      best_epoch, "diverged", train_idx, val_idx, test_idx),
            )
        val_mse = subset_mse(opt.theta, val_idx)
        hist_train.append(train_mse)
        hist_val.append(val_mse)
        hist_test.append(subset_mse(opt.theta, test_idx))
        hist_gnorm.append(grad_norm)
        if val_mse < best_val:
            best_val = val_mse
            best_theta = opt.theta.copy()
            best_epoch = epoch
            failures = 0
        else:
            failures += 1
            if failures >= cfg.max_validation_failures:
                stop_reason = "early_stop"
                break
        if grad_norm < GRADIENT_TOL:
            stop_reason = "gradient_converged"
            break

    w1, b1, w2, b2 = unpack_params(best_theta, n_in, n_hidden)
    model_meta = {
        "model_format_version": MODEL_FORMAT_VERSION,
        "seed": cfg.seed,
        "split": [cfg.train_frac, cfg.val_frac, cfg.test_frac],
        "split_mode": cfg.split_mode,
        "best_epoch": best_epoch,
        "stop_reason": stop_reason,
        "intensity_convention": "grayscale in [0,1]; BT.601 luma; MSCN on x255 scale",
    }
    if meta:
        model_meta.update(meta)
    model = NetworkModel(
        w1=w1.copy(), b1=b1.copy(), w2=w2.copy(), b2=b2,
        norm=norm, meta=model_meta,
    )
    history = _make_history(hist_train, hist_val, hist_test, hist_gnorm,
                            best_epoch, stop_reason, train_idx, val_idx, test_idx)
    return model, history


def _make_history(tr, va, te, gn, best_epoch, stop_reason, train_idx, val_idx, test_idx):
    return TrainHistory(
        train_mse=np.array(tr),
        val_mse=np.array(va),
        test_mse=np.array(te),
        grad_norm=np.array(gn),
        best_epoch=best_epoch,
        stop_reason=stop_reason,
        train_idx=np.asarray(train_idx, dtype=np.intp),
        val_idx=np.asarray(val_idx, dtype=np.intp),
        test_idx=np.asarray(test_idx, dtype=np.intp),
    )


def save_model(model: NetworkModel, path) -> None:
    """Serialize a model as versioned JSON (floats round-trip exactly)."""
    doc = {
        "format": "gradiqa-model",
        "format_version": MODEL_FORMAT_VERSION,
        "topology": [model.n_in, model.n_hidden, 1],
        "hidden_activation": model.hidden_activation,
        "output_activation": model.output_activation,
        "params": pack_params(model.w1, model.b1, model.w2, model.b2).tolist(),
        "norm_mean": model.norm.mean.tolist(),
        "norm_std": model.norm.std.tolist(),
        "meta": model.meta,
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_model(path) -> NetworkModel:
    """Load and validate a model file written by save_model."""
    try:
        doc = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: malformed model file ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != "gradiqa-model":
        raise ModelFormatError(f"{path}: not a model file")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: model format version {doc.get('format_version')} "
            f"unsupported (expected {MODEL_FORMAT_VERSION})"
        )
    try:
        n_in, n_hidden, n_out = doc["topology"]
        params = np.array(doc["params"], dtype=np.float64)
        norm = NormalizationStats(
            mean=np.array(doc["norm_mean"], dtype=np.float64),
            std=np.array(doc["norm_std"], dtype=np.float64),
        )
        meta = doc.get("meta", {})
        hidden_act = doc["hidden_activation"]
        output_act = doc["output_activation"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: missing or malformed field ({exc})") from exc
    if n_out != 1:
        raise ModelFormatError(f"{path}: only single-output topologies supported")
    if hidden_act != "tanh" or output_act != "identity":
        raise ModelFormatError(f"{path}: unsupported activations {hidden_act}/{output_act}")
    expected = n_hidden * n_in + 2 * n_hidden + 1
    if params.size != expected:
        raise ModelFormatError(
            f"{path}: {params.size} parameters inconsistent with topology "
            f"{n_in}-{n_hidden}-1 (expected {expected})"
        )
    if not np.all(np.isfinite(params)):
        raise ModelFormatError(f"{path}: non-finite parameters")
    if norm.mean.shape != (n_in,) or norm.std.shape != (n_in,):
        raise ModelFormatError(f"{path}: normalization stats do not match topology")
    w1, b1, w2, b2 = unpack_params(params, n_in, n_hidden)
    return NetworkModel(
        w1=w1.copy(), b1=b1.copy(), w2=w2.copy(), b2=b2,
        norm=norm, meta=meta,
        hidden_activation=hidden_act, output_activation=output_act,
    )
