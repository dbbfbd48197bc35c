"""Perception latency model.

Obstacle positions become a hierarchical count vector (fine grid, mid grid,
whole ROI). Baseline latency on the reference resource is linear in the
features ``[x*x, x*L(x), x, L(x)]`` plus a constant, where ``L = log1p``;
other resources scale it by a per-module conversion ratio.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .validation import DataError, check_matrix, check_non_negative, check_targets

logger = logging.getLogger(__name__)

LOG_CONVENTION = "log1p"


@dataclass(frozen=True)
class RoiSpec:
    """Rectangular region of interest centred on the AV.

    ``x`` runs across the width (lateral), ``y`` along the depth
    (longitudinal); both are measured from the ROI centre. Cells are
    ``(width, depth)`` pairs. Grids are flattened row-major with rows along
    depth, starting at the most negative ``y``.
    """

    roi_width: float = 64.0
    roi_depth: float = 50.0
    fine_cell: tuple = (2.0, 2.0)
    mid_cell: tuple = (8.0, 10.0)

    def __post_init__(self):
        object.__setattr__(self, "fine_cell", tuple(float(v) for v in self.fine_cell))
        object.__setattr__(self, "mid_cell", tuple(float(v) for v in self.mid_cell))
        self.validate()

    def validate(self):
        if not (self.roi_width > 0 and self.roi_depth > 0):
            raise ValueError("ROI dimensions must be positive")
        for label, (cw, cd) in (("fine", self.fine_cell), ("mid", self.mid_cell)):
            if not (cw > 0 and cd > 0):
                raise ValueError(f"{label} cell must be positive")
            for extent, size in ((self.roi_width, cw), (self.roi_depth, cd)):
                ratio = extent / size
                if abs(ratio - round(ratio)) > 1e-9:
                    raise ValueError(f"{label} cell {size} does not tile ROI extent {extent}")
        if not (self.fine_cell[0] <= self.mid_cell[0] <= self.roi_width
                and self.fine_cell[1] <= self.mid_cell[1] <= self.roi_depth):
            raise ValueError("cells must satisfy fine <= mid <= ROI")

    def _shape(self, cell) -> tuple[int, int]:
        return int(round(self.roi_depth / cell[1])), int(round(self.roi_width / cell[0]))

    @property
    def fine_shape(self) -> tuple[int, int]:
        """(rows, cols) of the fine grid."""
        return self._shape(self.fine_cell)

    @property
    def mid_shape(self) -> tuple[int, int]:
        return self._shape(self.mid_cell)

    @property
    def n_fine(self) -> int:
        r, c = self.fine_shape
        return r * c

    @property
    def n_mid(self) -> int:
        r, c = self.mid_shape
        return r * c

    @property
    def dim(self) -> int:
        return self.n_fine + self.n_mid + 1

    def fine_centers(self) -> np.ndarray:
        """(n_fine, 2) array of fine-cell centre coordinates."""
        rows, cols = self.fine_shape
        cw, cd = self.fine_cell
        xs = -self.roi_width / 2 + cw * (np.arange(cols) + 0.5)
        ys = -self.roi_depth / 2 + cd * (np.arange(rows) + 0.5)
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def fine_to_mid(self) -> np.ndarray:
        """Index of the mid cell that contains each fine cell."""
        centers = self.fine_centers()
        _, mcols = self.mid_shape
        mc = np.floor((centers[:, 0] + self.roi_width / 2) / self.mid_cell[0]).astype(int)
        mr = np.floor((centers[:, 1] + self.roi_depth / 2) / self.mid_cell[1]).astype(int)
        return mr * mcols + mc

    def near_field(self, radius: float) -> np.ndarray:
        """Boolean mask over fine cells whose centre lies within ``radius``."""
        return np.hypot(*self.fine_centers().T) <= radius


def _cell_span(lo, hi, origin, size, count):
    first = int(np.floor((lo - origin) / size))
    last = int(np.ceil((hi - origin) / size)) - 1
    return max(first, 0), min(max(last, first), count - 1)


def build_density_vector(positions=None, roi: RoiSpec | None = None, fine_counts=None) -> np.ndarray:
    """Hierarchical obstacle count vector for one frame.

    ``positions`` rows are ``(x, y)`` points or ``(x, y, width, depth)``
    boxes. A box increments every fine and mid cell it overlaps and the total
    once. Obstacles whose centre lies outside the ROI are dropped. As an
    alternative, ``fine_counts`` gives the fine grid directly and the coarser
    levels are summed from it.
    """
    roi = roi or RoiSpec()
    rows, cols = roi.fine_shape
    mrows, mcols = roi.mid_shape
    if fine_counts is not None:
        fine = check_non_negative(np.asarray(fine_counts, dtype=float).ravel(), "fine_counts")
        if fine.size != roi.n_fine:
            raise DataError(f"fine_counts has {fine.size} cells, expected {roi.n_fine}")
        mid = np.bincount(roi.fine_to_mid(), weights=fine, minlength=roi.n_mid)
        return np.concatenate([fine, mid, [fine.sum()]])

    fine = np.zeros(roi.n_fine)
    mid = np.zeros(roi.n_mid)
    total = 0
    pts = np.asarray(positions if positions is not None else [], dtype=float)
    if pts.size == 0:
        return np.zeros(roi.dim)
    pts = pts.reshape(len(pts), -1)
    if pts.shape[1] not in (2, 4):
        raise DataError("positions must have 2 (point) or 4 (box) columns")
    hw, hd = roi.roi_width / 2, roi.roi_depth / 2
    inside = (pts[:, 0] >= -hw) & (pts[:, 0] < hw) & (pts[:, 1] >= -hd) & (pts[:, 1] < hd)
    pts = pts[inside]
    total = len(pts)
    if pts.shape[1] == 2:
        fc = ((pts[:, 0] + hw) // roi.fine_cell[0]).astype(int)
        fr = ((pts[:, 1] + hd) // roi.fine_cell[1]).astype(int)
        np.add.at(fine, fr * cols + fc, 1)
        mc = ((pts[:, 0] + hw) // roi.mid_cell[0]).astype(int)
        mr = ((pts[:, 1] + hd) // roi.mid_cell[1]).astype(int)
        np.add.at(mid, mr * mcols + mc, 1)
    else:
        for x, y, w, d in pts:
            x0, x1, y0, y1 = x - w / 2, x + w / 2, y - d / 2, y + d / 2
            for grid, cell, shape in ((fine, roi.fine_cell, (rows, cols)), (mid, roi.mid_cell, (mrows, mcols))):
                c0, c1 = _cell_span(x0, x1, -hw, cell[0], shape[1])
                r0, r1 = _cell_span(y0, y1, -hd, cell[1], shape[0])
                for r in range(r0, r1 + 1):
                    grid[r * shape[1] + c0:r * shape[1] + c1 + 1] += 1
    return np.concatenate([fine, mid, [total]])


class ObstacleDensityEncoder(TransformerMixin, BaseEstimator):
    """Encode per-frame obstacle lists as hierarchical count vectors.

    ``transform`` takes a sequence of frames, each an array of positions
    (see :func:`build_density_vector`), and returns ``(n_frames, roi.dim)``.
    """

    def __init__(self, roi=None):
        self.roi = roi

    def fit(self, X=None, y=None):
        self.roi_ = self.roi or RoiSpec()
        self.n_features_out_ = self.roi_.dim
        return self

    def transform(self, X):
        check_is_fitted(self, "roi_")
        if len(X) == 0:
            return np.zeros((0, self.roi_.dim))
        return np.vstack([build_density_vector(frame, self.roi_) for frame in X])


def safe_log(x):
    """``log(1 + x)``: finite at zero counts."""
    return np.log1p(x)


def feature_transform(x, include_bias=True) -> np.ndarray:
    """``[x*x, x*L(x), x, L(x), 1]`` for a vector or for each row of a matrix."""
    x = check_non_negative(x, "x")
    lx = safe_log(x)
    parts = [x * x, x * lx, x, lx]
    if include_bias:
        parts.append(np.ones(x.shape[:-1] + (1,)))
    return np.concatenate(parts, axis=-1)


class LogQuadraticFeatures(TransformerMixin, BaseEstimator):
    def __init__(self, include_bias=True):
        self.include_bias = include_bias

    def fit(self, X, y=None):
        X = check_matrix(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_matrix(X, n_features=self.n_features_in_, allow_empty=True)
        return feature_transform(X, self.include_bias)


@dataclass
class LatencyCoefficients:
    """Coefficient blocks for the four feature groups plus the constant ``e``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    e: float = 0.0

    def __post_init__(self):
        self.a, self.b, self.c, self.d = (np.asarray(v, dtype=float) for v in (self.a, self.b, self.c, self.d))
        if not (len(self.a) == len(self.b) == len(self.c) == len(self.d)):
            raise ValueError("coefficient vectors must have equal length")
        if not (np.all(np.isfinite(self.vector())) and np.isfinite(self.e)):
            raise ValueError("coefficients must be finite")

    @property
    def dim(self) -> int:
        return len(self.a)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.a, self.b, self.c, self.d])

    @classmethod
    def from_vector(cls, w, e=0.0):
        w = np.asarray(w, dtype=float)
        a, b, c, d = np.split(w, 4)
        return cls(a, b, c, d, float(e))

    @classmethod
    def zeros(cls, dim, e=0.0):
        return cls.from_vector(np.zeros(4 * dim), e)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in "abcd"} | {"e": self.e}

    @classmethod
    def from_dict(cls, d):
        return cls(d["a"], d["b"], d["c"], d["d"], d["e"])


class ClampCounter:
    """Counts predictions clamped to zero."""

    def __init__(self):
        self.count = 0

    def apply(self, values):
        neg = values < 0
        n = int(np.count_nonzero(neg))
        if n:
            self.count += n
            logger.debug("clamped %d negative latency predictions", n)
            values = np.where(neg, 0.0, values)
        return values


clamp_counter = ClampCounter()


def predict_baseline(c: LatencyCoefficients, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (c.dim,):
        raise DataError(f"density vector has shape {x.shape}, expected ({c.dim},)")
    tau = float(feature_transform(x, include_bias=False) @ c.vector() + c.e)
    return float(clamp_counter.apply(np.array(tau)))


def _gcv_grid(evals):
    scale = max(float(np.mean(evals)), 1e-300)
    return scale * np.logspace(-10, 3, 53)


class BaselineLatencyRegressor(RegressorMixin, BaseEstimator):
    """Ridge least squares on log-quadratic count features.

    Minimises ``sum (tau_hat - tau)**2 + ridge * ||w||**2``; the constant
    term is not penalised. ``y`` may hold one column per software module,
    in which case one coefficient set is fitted per column and the Gram
    matrix is shared.

    Parameters
    ----------
    ridge : float or "gcv", default 1e-6
        Penalty weight. ``"gcv"`` selects it per output by generalized
        cross-validation over a log grid.
    clamp : bool, default True
        Clamp negative predictions to zero.
    """

    def __init__(self, ridge=1e-6, clamp=True):
        self.ridge = ridge
        self.clamp = clamp

    def fit(self, X, y):
        X = check_non_negative(check_matrix(X), "X")
        Y = check_targets(y, X.shape[0])
        single = Y.ndim == 1
        Y2 = Y.reshape(len(Y), -1)
        F = feature_transform(X, include_bias=False)
        mu = F.mean(axis=0)
        Fc = F - mu
        ymu = Y2.mean(axis=0)
        Yc = Y2 - ymu
        if isinstance(self.ridge, str):
            if self.ridge != "gcv":
                raise ValueError(f"unknown ridge mode {self.ridge!r}")
            W, lam = self._fit_gcv(Fc, Yc)
        else:
            if not self.ridge >= 0:
                raise ValueError("ridge must be non-negative")
            W = self._fit_fixed(Fc, Yc, float(self.ridge))
            lam = np.full(Y2.shape[1], float(self.ridge))
        intercept = ymu - mu @ W
        self.n_features_in_ = X.shape[1]
        self.coef_ = W[:, 0] if single else W.T
        self.intercept_ = float(intercept[0]) if single else intercept
        self.ridge_ = float(lam[0]) if single else lam
        self.n_clamped_ = 0
        return self

    @staticmethod
    def _fit_fixed(Fc, Yc, ridge):
        # Jacobi scaling keeps the normal equations well conditioned; the
        # penalty stays on the unscaled coefficients.
        s = np.sqrt(np.einsum("ij,ij->j", Fc, Fc))
        s[s == 0] = 1.0
        Fs = Fc / s
        G = Fs.T @ Fs
        G[np.diag_indices_from(G)] += ridge / (s * s)
        B = Fs.T @ Yc
        try:
            Z = scipy.linalg.cho_solve(scipy.linalg.cho_factor(G), B)
        except np.linalg.LinAlgError:
            Z = scipy.linalg.lstsq(Fs, Yc)[0]
        return Z / s[:, None]

    @staticmethod
    def _fit_gcv(Fc, Yc):
        n = Fc.shape[0]
        evals, V = np.linalg.eigh(Fc.T @ Fc)
        evals = np.clip(evals, 0.0, None)
        Bt = V.T @ (Fc.T @ Yc)
        yy = np.einsum("ij,ij->j", Yc, Yc)
        grid = _gcv_grid(evals)
        best = np.full(Yc.shape[1], np.inf)
        lam = np.zeros(Yc.shape[1])
        for g in grid:
            Z = Bt / (evals + g)[:, None]
            rss = yy - 2 * np.einsum("ij,ij->j", Z, Bt) + np.einsum("i,ij->j", evals, Z * Z)
            df = float(np.sum(evals / (evals + g)))
            score = n * np.maximum(rss, 0.0) / max(n - df, 1e-12) ** 2
            better = score < best
            best[better] = score[better]
            lam[better] = g
        W = V @ (Bt / (evals[:, None] + lam[None, :]))
        return W, lam

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_non_negative(check_matrix(X, n_features=self.n_features_in_, allow_empty=True), "X")
        F = feature_transform(X, include_bias=False)
        W = self.coef_.T if self.coef_.ndim == 2 else self.coef_
        out = F @ W + self.intercept_
        if self.clamp:
            neg = int(np.count_nonzero(out < 0))
            if neg:
                self.n_clamped_ += neg
                logger.debug("clamped %d negative latency predictions", neg)
                out = np.maximum(out, 0.0)
        return out

    def coefficients(self, output=0) -> LatencyCoefficients:
        check_is_fitted(self, "coef_")
        if self.coef_.ndim == 1:
            return LatencyCoefficients.from_vector(self.coef_, self.intercept_)
        return LatencyCoefficients.from_vector(self.coef_[output], self.intercept_[output])


def fit_baseline(samples, ridge=1e-6) -> LatencyCoefficients:
    """Fit one module's coefficients from ``(density_vector, latency)`` pairs."""
    if len(samples) == 0:
        raise DataError("no samples")
    X = np.vstack([np.asarray(s[0], dtype=float) for s in samples])
    y = np.array([s[1] for s in samples], dtype=float)
    return BaselineLatencyRegressor(ridge=ridge).fit(X, y).coefficients()


def coefficient_magnitudes(c: LatencyCoefficients) -> dict:
    """Mean absolute coefficient per feature group, highest order first."""
    return {
        "x^2": float(np.mean(np.abs(c.a))),
        "x*log": float(np.mean(np.abs(c.b))),
        "x": float(np.mean(np.abs(c.c))),
        "log": float(np.mean(np.abs(c.d))),
    }


def model_mse(c: LatencyCoefficients, X, y) -> float:
    """Mean squared residual of the (unclamped) model on ``(X, y)``."""
    X = check_matrix(X, n_features=c.dim)
    y = np.asarray(y, dtype=float)
    pred = feature_transform(X, include_bias=False) @ c.vector() + c.e
    return float(np.mean((pred - y) ** 2))


@dataclass
class ConversionTable:
    """Latency ratio of each (module, resource) pair relative to the baseline."""

    ratio: dict = field(default_factory=dict)

    def __post_init__(self):
        for key, nu in self.ratio.items():
            if not nu > 0:
                raise ValueError(f"conversion ratio for {key} must be positive")
            if key[1] == 0 and nu != 1:
                raise ValueError(f"baseline resource ratio for {key[0]} must be 1")

    def __getitem__(self, key) -> float:
        module, resource = key
        if resource == 0 and key not in self.ratio:
            return 1.0
        try:
            return self.ratio[(module, int(resource))]
        except KeyError:
            raise KeyError(f"no conversion ratio for module {module!r} on resource {resource}") from None

    def to_list(self) -> list:
        return [[m, r, nu] for (m, r), nu in sorted(self.ratio.items())]

    @classmethod
    def from_list(cls, rows):
        return cls({(m, int(r)): float(nu) for m, r, nu in rows})


def apply_conversion(tau: float, module: str, resource: int, table: ConversionTable) -> float:
    return tau * table[(module, resource)]


@dataclass
class PearsonMap:
    """Per-coordinate Pearson r, split back into the grid hierarchy."""

    r: np.ndarray
    zero_variance: np.ndarray
    roi: RoiSpec | None = None

    @property
    def fine(self) -> np.ndarray:
        roi = self.roi or RoiSpec()
        return self.r[:roi.n_fine].reshape(roi.fine_shape)

    @property
    def mid(self) -> np.ndarray:
        roi = self.roi or RoiSpec()
        return self.r[roi.n_fine:roi.n_fine + roi.n_mid].reshape(roi.mid_shape)

    @property
    def total(self) -> float:
        return float(self.r[-1])


def pearson_heatmap(X, y, roi: RoiSpec | None = None) -> PearsonMap:
    """Pearson correlation between each density coordinate and latency.

    Coordinates (or targets) with zero variance get ``r = 0`` and are
    flagged in ``zero_variance``.
    """
    X = check_matrix(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 2:
        raise DataError("need at least 2 samples for Pearson correlation")
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    sx = np.sqrt(np.einsum("ij,ij->j", Xc, Xc))
    sy = float(np.sqrt(yc @ yc))
    flat = (sx == 0) | (sy == 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (Xc.T @ yc) / (sx * sy)
    r = np.where(flat, 0.0, np.clip(r, -1.0, 1.0))
    return PearsonMap(r, flat, roi)
