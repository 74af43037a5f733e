"""Cell-factor calibration from AT-splitting field measurements.

The cell factor is the fixed ratio E_cell / E_FF at a given distance and
frequency, so the log-log fit has its slope pinned at one and only the
intercept is free. A free-slope fit is available as a diagnostic.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from .atoms import CESIUM_34D_35P, CONSTANTS, RydbergTransition, dipole_moment_si
from .exceptions import DomainError, InsufficientDataError
from .linkbudget import AntennaLink, CellFactor, dbm_to_watts, e_far_field

__all__ = [
    "CalibrationPoint",
    "e_from_at_splitting",
    "CellFactorRegressor",
    "fit_cell_factor",
    "combine_uncertainty",
    "load_calibration_csv",
]


@dataclass(frozen=True)
class CalibrationPoint:
    p_rf: float
    e_ff: float
    e_cell_measured: float
    n_averages: int = 3
    rel_std: float = 0.05

    def __post_init__(self):
        if not self.e_cell_measured > 0:
            raise DomainError("e_cell_measured must be > 0 (AT-resolvable regime only)")
        if not self.rel_std >= 0:
            raise DomainError("rel_std must be >= 0")


def e_from_at_splitting(delta_f, t: RydbergTransition = CESIUM_34D_35P):
    """Field in V/m that produces an AT splitting of ``delta_f`` Hz."""
    d = np.asarray(delta_f, dtype=float)
    if np.any(d < 0):
        raise DomainError("AT splitting must be >= 0")
    out = 2 * math.pi * CONSTANTS.hbar * d / (t.wavelength_ratio * dipole_moment_si(t))
    return float(out) if out.ndim == 0 else out


class CellFactorRegressor(BaseEstimator, RegressorMixin):
    """Log-log regression of cell field on far-field estimate.

    Parameters
    ----------
    free_slope : bool, default=False
        Also fit the log-log slope. The reported ``cell_factor_`` is then the
        intercept of the free fit; it only equals the ratio when the slope is 1.

    Attributes
    ----------
    cell_factor_ : float
    fit_uncertainty_ : float
        Standard error of ``cell_factor_`` from the log-residual scatter.
    slope_ : float
    n_points_ : int
    """

    def __init__(self, free_slope=False):
        self.free_slope = free_slope

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_2d=False, ensure_min_samples=1)
        e_ff = np.ravel(X).astype(float)
        e_cell = y.astype(float)
        if e_ff.size < 2:
            raise InsufficientDataError(f"need at least 2 calibration points, got {e_ff.size}")
        if np.any(e_ff <= 0) or np.any(e_cell <= 0):
            raise DomainError("calibration fields must be positive for a log-log fit")
        lx, ly = np.log(e_ff), np.log(e_cell)
        n = lx.size
        if self.free_slope:
            if n < 3:
                raise InsufficientDataError("free-slope fit needs at least 3 points")
            slope, intercept = np.polyfit(lx, ly, 1)
            resid = ly - (slope * lx + intercept)
            s = math.sqrt(resid @ resid / (n - 2))
            sxx = ((lx - lx.mean()) ** 2).sum()
            se_intercept = s * math.sqrt(1.0 / n + lx.mean() ** 2 / sxx)
        else:
            slope = 1.0
            diffs = ly - lx
            intercept = diffs.mean()
            se_intercept = diffs.std(ddof=1) / math.sqrt(n)
        self.slope_ = float(slope)
        self.log_intercept_ = float(intercept)
        self.cell_factor_ = math.exp(intercept)
        self.fit_uncertainty_ = self.cell_factor_ * se_intercept
        self.n_points_ = n
        return self

    def predict(self, X):
        check_is_fitted(self, "cell_factor_")
        e_ff = np.ravel(check_array(X, ensure_2d=False)).astype(float)
        return self.cell_factor_ * e_ff ** self.slope_

    def to_cell_factor(self) -> CellFactor:
        check_is_fitted(self, "cell_factor_")
        return CellFactor(self.cell_factor_, self.fit_uncertainty_)


def fit_cell_factor(points: Sequence[CalibrationPoint]) -> CellFactor:
    """Unit-slope intercept fit over calibration points."""
    if len(points) < 2:
        raise InsufficientDataError(f"need at least 2 calibration points, got {len(points)}")
    e_ff = np.array([p.e_ff for p in points], dtype=float)
    e_cell = np.array([p.e_cell_measured for p in points], dtype=float)
    return CellFactorRegressor().fit(e_ff, e_cell).to_cell_factor()


def combine_uncertainty(rel_components) -> float:
    """Root-sum-square of relative uncertainty components."""
    comps = np.asarray(list(rel_components), dtype=float)
    if np.any(comps < 0):
        raise DomainError("uncertainty components must be >= 0")
    return float(math.sqrt(math.fsum(comps ** 2)))


def load_calibration_csv(path, link: AntennaLink = AntennaLink(),
                         t: RydbergTransition = CESIUM_34D_35P) -> list:
    """Read ``p_rf_dbm,delta_f_hz`` or ``e_ff_vpm,e_cell_vpm`` rows into points."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        cols = tuple(c.strip() for c in (reader.fieldnames or ()))
        rows = list(reader)
    points = []
    if cols[:2] == ("p_rf_dbm", "delta_f_hz"):
        for row in rows:
            p_w = dbm_to_watts(float(row["p_rf_dbm"]))
            e_meas = e_from_at_splitting(float(row["delta_f_hz"]), t)
            points.append(CalibrationPoint(p_w, e_far_field(p_w, link), e_meas))
    elif cols[:2] == ("e_ff_vpm", "e_cell_vpm"):
        for row in rows:
            points.append(CalibrationPoint(float("nan"), float(row["e_ff_vpm"]),
                                           float(row["e_cell_vpm"])))
    else:
        raise ValueError(
            f"{path}: header must be 'p_rf_dbm,delta_f_hz' or 'e_ff_vpm,e_cell_vpm', got {cols}"
        )
    return points
