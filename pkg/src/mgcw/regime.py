"""Temperature-regime classification.

Homogeneous coupling is classified by beta against 1.  Heterogeneous coupling
is classified by the spectrum of H = J^{-1} - diag(alpha): positive definite
means high temperature, singular positive semi-definite means critical, and an
eigenvalue below zero means low temperature.  The critical set has measure
zero, so a numeric classifier needs an explicit band around zero; the band is
part of the report.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ModelError, UnsupportedCaseError
from .model import Heterogeneous, Homogeneous, Model

CRITICAL_TOL_SCALE = 1e-9


class RegimeLabel(str, Enum):
    HIGH = "high"
    CRITICAL = "critical"
    LOW = "low"


@dataclass(frozen=True)
class RegimeReport:
    label: RegimeLabel
    tolerance: float
    eigenvalues: tuple[float, ...]
    h_matrix: np.ndarray | None
    l_matrix: np.ndarray | None
    delta: float | None
    # Off-diagonal of J^{-1} with the sign flipped so it carries the sign of
    # J_12; the two-group closed forms are stated in that convention.
    l12_flipped_sign: float | None
    conditions_checked: dict

    def to_json_dict(self) -> dict:
        return {
            "label": self.label.value,
            "tolerance": self.tolerance,
            "eigenvalues": list(self.eigenvalues),
            "H": None if self.h_matrix is None else self.h_matrix.tolist(),
            "L": None if self.l_matrix is None else self.l_matrix.tolist(),
            "delta": self.delta,
            "l12_flipped_sign": self.l12_flipped_sign,
            "conditions_checked": self.conditions_checked,
        }


def inverse_coupling(coupling: Heterogeneous) -> np.ndarray:
    """L = J^{-1} for a positive definite coupling matrix."""
    if not isinstance(coupling, Heterogeneous):
        raise UnsupportedCaseError("inverse coupling is defined for matrix coupling only")
    j = coupling.matrix
    eigs = np.linalg.eigvalsh(j)
    if eigs[0] <= 0.0:
        raise ModelError(f"coupling not positive definite (eigenvalue {eigs[0]:.6g})")
    l = np.linalg.inv(j)
    return 0.5 * (l + l.T)


def h_matrix(model: Model) -> np.ndarray:
    """H = J^{-1} - diag(alpha) for a heterogeneous model."""
    if model.is_homogeneous:
        raise UnsupportedCaseError("H is defined for heterogeneous coupling only")
    return inverse_coupling(model.coupling) - np.diag(model.alphas)


def classify(model: Model, tol_scale: float = CRITICAL_TOL_SCALE) -> RegimeReport:
    """Classify a model into high / critical / low temperature.

    Heterogeneous models are labelled by the smallest eigenvalue of H with the
    band |lambda_min| <= tol_scale * max(1, ||H||_inf) counting as critical.
    """
    if model.is_homogeneous:
        beta = model.coupling.beta
        tol = tol_scale * max(1.0, abs(beta))
        if beta < 1.0 - tol:
            label = RegimeLabel.HIGH
        elif beta > 1.0 + tol:
            label = RegimeLabel.LOW
        else:
            label = RegimeLabel.CRITICAL
        return RegimeReport(
            label=label,
            tolerance=tol,
            eigenvalues=(),
            h_matrix=None,
            l_matrix=None,
            delta=None,
            l12_flipped_sign=None,
            conditions_checked={"beta": beta, "beta_minus_one": beta - 1.0},
        )

    l = inverse_coupling(model.coupling)
    h = l - np.diag(model.alphas)
    eigs = np.linalg.eigvalsh(h)
    tol = tol_scale * max(1.0, float(np.abs(h).sum(axis=1).max()))
    lam_min = float(eigs[0])
    if lam_min > tol:
        label = RegimeLabel.HIGH
    elif lam_min < -tol:
        label = RegimeLabel.LOW
    else:
        label = RegimeLabel.CRITICAL
    l12 = float(-l[0, 1]) if model.m == 2 else None
    return RegimeReport(
        label=label,
        tolerance=tol,
        eigenvalues=tuple(float(e) for e in eigs),
        h_matrix=h,
        l_matrix=l,
        delta=model.coupling.determinant,
        l12_flipped_sign=l12,
        conditions_checked={"lambda_min": lam_min},
    )


def two_group_conditions(j: np.ndarray, alphas, tol: float) -> dict:
    """The three closed-form inequalities for a 2x2 coupling matrix.

    With a = 1/alpha_1 - J_11, b = 1/alpha_2 - J_22 and c = J_12^2 the high
    regime is a > 0, b > 0, c < a b; equality c = a b (with a, b > 0) is
    critical.  When a group fraction is zero the conditions collapse to the
    single-group rule on the other group's diagonal entry.
    """
    a1, a2 = float(alphas[0]), float(alphas[1])
    j = np.asarray(j, dtype=float)
    out: dict = {}
    if a1 == 0.0 or a2 == 0.0:
        jd = j[1, 1] if a1 == 0.0 else j[0, 0]
        out["small_group"] = True
        out["j_diag"] = float(jd)
        if jd < 1.0 - tol:
            out["label"] = RegimeLabel.HIGH
        elif jd > 1.0 + tol:
            out["label"] = RegimeLabel.LOW
        else:
            out["label"] = RegimeLabel.CRITICAL
        return out
    a = 1.0 / a1 - j[0, 0]
    b = 1.0 / a2 - j[1, 1]
    c = j[0, 1] ** 2
    out.update(
        {
            "small_group": False,
            "cond1_lhs": float(j[0, 0]),
            "cond1_rhs": 1.0 / a1,
            "cond2_lhs": float(j[1, 1]),
            "cond2_rhs": 1.0 / a2,
            "cond3_lhs": float(c),
            "cond3_rhs": float(a * b),
        }
    )
    scale = max(1.0, abs(a * b), c)
    if a > 0.0 and b > 0.0 and abs(c - a * b) <= tol * scale:
        out["label"] = RegimeLabel.CRITICAL
    elif a > 0.0 and b > 0.0 and c < a * b:
        out["label"] = RegimeLabel.HIGH
    else:
        out["label"] = RegimeLabel.LOW
    return out


def classify_two_group_closed_form(
    model: Model, tol_scale: float = CRITICAL_TOL_SCALE
) -> RegimeLabel:
    """Two-group classification through the closed-form inequalities.

    Cross-check for the spectral route; agrees with `classify` whenever the
    smallest eigenvalue of H is outside the critical band.
    """
    if model.m != 2:
        raise UnsupportedCaseError("closed-form classification needs exactly 2 groups")
    if model.is_homogeneous:
        raise UnsupportedCaseError("closed-form classification needs matrix coupling")
    j = model.coupling.matrix
    tol = tol_scale * max(1.0, float(np.abs(j).max()))
    return two_group_conditions(j, model.alphas, tol)["label"]
