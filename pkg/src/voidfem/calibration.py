"""Material identification from uniaxial compression tests.

The neo-Hookean response of a laterally free cylinder is evaluated in
principal stretches: for a given axial stretch the lateral stretch solves the
zero-lateral-stress condition, and the axial first Piola-Kirchhoff stress
follows by substitution.  A one-dimensional least-squares fit then recovers
the Young's modulus at fixed (near-incompressible) Poisson's ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .materials import neo_hookean_3d

__all__ = [
    "CalibrationDomainError",
    "UniaxialDataset",
    "moduli_from_young",
    "lateral_stretch",
    "uniaxial_p11",
    "fit_young_modulus",
]


class CalibrationDomainError(ValueError):
    """No admissible lateral stretch in the search bracket."""


@dataclass
class UniaxialDataset:
    """One specimen's (axial stretch, axial nominal stress) samples."""

    lambda1: np.ndarray
    p11: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        self.lambda1 = np.asarray(self.lambda1, dtype=float)
        self.p11 = np.asarray(self.p11, dtype=float)
        if self.lambda1.shape != self.p11.shape:
            raise ValueError("lambda1 and p11 must have matching shapes")
        if np.any(self.lambda1 <= 0):
            raise ValueError("stretches must be positive")

    @classmethod
    def from_csv(cls, path) -> "UniaxialDataset":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1])


def moduli_from_young(E: float, nu: float) -> tuple[float, float]:
    """Bulk and shear moduli of the linearized model: K = E/3(1-2nu), G = E/2(1+nu)."""
    return E / (3.0 * (1.0 - 2.0 * nu)), E / (2.0 * (1.0 + nu))


def _p_lateral(lam1: float, lam_hat: float, K: float, G: float) -> float:
    """Lateral nominal stress P22 at (lam1, lam_hat, lam_hat) in stretch form."""
    J = lam1 * lam_hat * lam_hat
    I1 = lam1 * lam1 + 2.0 * lam_hat * lam_hat
    return (K / lam_hat) * np.log(J) - (G / 3.0) * J ** (-2.0 / 3.0) * (
        I1 / lam_hat - 3.0 * lam_hat
    )


def lateral_stretch(lam1: float, K: float, G: float) -> float:
    """Lateral stretch that makes the lateral stress vanish.

    Solved by bracketed root finding on [0.2, 5] followed by Newton polish to
    |P22| < 1e-10 G.
    """
    if lam1 <= 0:
        raise ValueError("axial stretch must be positive")
    lo, hi = 0.2, 5.0
    f_lo, f_hi = _p_lateral(lam1, lo, K, G), _p_lateral(lam1, hi, K, G)
    if f_lo * f_hi > 0:
        raise CalibrationDomainError(
            f"no zero-lateral-stress root in [{lo}, {hi}] for lambda1={lam1}"
        )
    lam = brentq(lambda x: _p_lateral(lam1, x, K, G), lo, hi, xtol=1e-14, rtol=1e-15)
    for _ in range(5):
        f = _p_lateral(lam1, lam, K, G)
        if abs(f) < 1e-10 * G:
            break
        h = 1e-7 * lam
        df = (_p_lateral(lam1, lam + h, K, G) - _p_lateral(lam1, lam - h, K, G)) / (2 * h)
        lam -= f / df
    if abs(_p_lateral(lam1, lam, K, G)) > 1e-10 * G:
        raise CalibrationDomainError(f"lateral-stress root did not polish for lambda1={lam1}")
    return float(lam)


def uniaxial_p11(lam1, K: float, G: float):
    """Axial nominal stress of the laterally free uniaxial state.

    Evaluated from the stretch-form expression at the zero-lateral-stress
    root; agrees with the tensor-form law on F = diag(lam1, lam_hat, lam_hat)
    to near machine precision (dual-path check exercised in the tests).
    """
    scalars = np.isscalar(lam1)
    lam1 = np.atleast_1d(np.asarray(lam1, dtype=float))
    out = np.empty_like(lam1)
    for i, l1 in enumerate(lam1):
        lh = lateral_stretch(l1, K, G)
        J = l1 * lh * lh
        I1 = l1 * l1 + 2.0 * lh * lh
        out[i] = (K / l1) * np.log(J) - (G / 3.0) * J ** (-2.0 / 3.0) * (
            I1 / l1 - 3.0 * l1
        )
    return float(out[0]) if scalars else out


def uniaxial_p11_tensor(lam1: float, K: float, G: float) -> float:
    """Tensor-form axial stress on the diagonal uniaxial state (cross check)."""
    lh = lateral_stretch(lam1, K, G)
    P = neo_hookean_3d(K, G, np.diag([lam1, lh, lh]))
    return float(P[0, 0])


@dataclass
class FitResult:
    E: float
    K: float
    G: float
    rms: float
    n_points: int


def fit_young_modulus(datasets, nu: float = 0.499) -> FitResult:
    """Least-squares fit of the Young's modulus to uniaxial stress data.

    ``nu`` is held fixed (near incompressibility); all datasets are weighted
    equally per point.  The one-dimensional objective is minimized by
    golden-section/parabolic search.
    """
    datasets = list(datasets)
    if not datasets:
        raise ValueError("need at least one dataset")
    lam = np.concatenate([d.lambda1 for d in datasets])
    p11 = np.concatenate([d.p11 for d in datasets])
    w = np.concatenate([np.full(d.lambda1.size, d.weight) for d in datasets])
    if np.all(np.abs(lam - 1.0) < 1e-12):
        raise ValueError("degenerate data: all stretches are 1")

    # model stress is linear in E at fixed nu, so cache the unit-E response
    K1, G1 = moduli_from_young(1.0, nu)
    base = uniaxial_p11(lam, K1, G1)

    def rms_for(E):
        r = E * base - p11
        return float(np.sqrt(np.sum(w * r * r) / np.sum(w)))

    # linear least squares gives the minimum directly; the scalar search
    # confirms it within bracket and guards degenerate input
    E0 = float(np.sum(w * base * p11) / np.sum(w * base * base))
    bracket = (max(E0 / 10.0, 1e-12), max(E0, 1e-9), max(E0 * 10.0, 1.0))
    res = minimize_scalar(rms_for, bracket=bracket, method="brent", options={"xtol": 1e-12})
    E = float(res.x)
    K, G = moduli_from_young(E, nu)
    return FitResult(E=E, K=K, G=G, rms=rms_for(E), n_points=int(lam.size))
