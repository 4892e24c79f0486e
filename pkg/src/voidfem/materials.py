"""Material-point response of the bulk and third-medium models.

Every evaluator returns a :class:`PointResponse` holding the energy density,
first Piola-Kirchhoff stress P (conjugate to F), second-order stress T
(conjugate to grad F), and the four tangent blocks.  All evaluators are
batched: F has shape ``(..., 2, 2)``, gradient tensors ``(..., 2, 2, 2)``,
and the response blocks broadcast accordingly.

The third-medium energy is the weighted sum of three parts:

* a pneumatic part, linear in J, that carries a prescribed hydrostatic
  Cauchy stress so a tagged void behaves exactly like a uniform-pressure
  follower load on its boundary;
* a compliant neo-Hookean contact part whose isochoric term stiffens
  rapidly under in-plane compression (the plane-strain ln^2 J term is
  optional and off by default);
* a quadratic second-gradient regularization, either the rotation-gradient
  plus Jacobian-gradient pair or the plain displacement-second-gradient
  penalty, scaled by ``gamma * k_r``.

Sign convention: ``ThirdMediumModel.p`` is the physical pressure difference
of the void relative to ambient (suction negative).  The void-equivalent
medium then carries Cauchy stress ``-p * I`` (hydrostatic tension under
suction, which pulls the void walls inward), so the pneumatic energy
coefficient used internally is ``-p``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensors import cofactor2, det2, inv2, skew_per_gradient

__all__ = [
    "InvalidStateError",
    "BulkModel",
    "ThirdMediumModel",
    "MaterialPointState",
    "PointResponse",
    "bulk_eval",
    "neo_hookean_3d",
    "pneumatic_eval",
    "contact_eval",
    "spin_increment",
    "update_grad_ln_q",
    "reg_lnq_eval",
    "reg_gradj_eval",
    "reg_gradf_eval",
    "third_medium_eval",
]

_EYE2 = np.eye(2)
# dcof(F)_ij/dF_kl for 2x2 tensors: constant permutation pattern eps_ik eps_jl.
_EPS2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
_DCOF = np.einsum("ik,jl->ijkl", _EPS2, _EPS2)
# Skew projector S_ijkl: maps X to (X - X^T)/2.
_SKW = 0.5 * (
    np.einsum("ik,jl->ijkl", _EYE2, _EYE2) - np.einsum("jk,il->ijkl", _EYE2, _EYE2)
)


class InvalidStateError(RuntimeError):
    """Non-positive volume ratio at a material point; recoverable step failure."""


@dataclass(frozen=True)
class BulkModel:
    """Compressible neo-Hookean solid: W = K/2 ln^2 J + G/2 (J^{-2/3} I1 - 3)."""

    K: float
    G: float

    def __post_init__(self):
        if self.K <= 0 or self.G <= 0:
            raise ValueError("bulk and shear moduli must be positive")


@dataclass(frozen=True)
class ThirdMediumModel:
    """Parameter bundle of the void material.

    Parameters
    ----------
    p : physical pressure difference in Pa, suction negative.
    gamma : contact stiffness in Pa; 0 disables the contact term.
    k_r : dimensionless regularization stiffness coefficient; the effective
        second-gradient coefficient is ``psi_r = gamma * k_r``.
    regularization : one of "lnq_plus_gradj", "gradf", "none".
    include_volumetric : include ln^2 J in the contact term (off in plane
        strain, where the isochoric term alone blocks compaction).
    psi_p : pneumatic multiplier; 1 outside topology optimization.
    """

    p: float = 0.0
    gamma: float = 1.0
    k_r: float = 0.0
    regularization: str = "lnq_plus_gradj"
    include_volumetric: bool = False
    psi_p: float = 1.0

    def __post_init__(self):
        if self.gamma < 0 or self.k_r < 0:
            raise ValueError("gamma and k_r must be non-negative")
        if self.regularization not in ("lnq_plus_gradj", "gradf", "none"):
            raise ValueError(f"unknown regularization {self.regularization!r}")

    @property
    def psi_r(self) -> float:
        return self.gamma * self.k_r


@dataclass
class MaterialPointState:
    """Committed history at the integration points of one region.

    ``grad_ln_q`` has shape (nel, nq, 2, 2, 2) in 1/m and is zero in the
    reference state.  Trials computed during iteration are only committed on
    step convergence.
    """

    grad_ln_q: np.ndarray

    @classmethod
    def zero(cls, nel: int, nq: int) -> "MaterialPointState":
        return cls(np.zeros((nel, nq, 2, 2, 2)))

    def copy(self) -> "MaterialPointState":
        return MaterialPointState(self.grad_ln_q.copy())


@dataclass
class PointResponse:
    """Energy density and its first/second variations at material points.

    W : (...,) J/m^3
    P : (..., 2, 2) Pa, dW/dF
    T : (..., 2, 2, 2) Pa m, dW/d(grad F)
    D : (..., 2, 2, 2, 2), dP/dF
    C_PT : (..., 2, 2, 2, 2, 2), dP/d(grad F)
    C_TP : (..., 2, 2, 2, 2, 2), dT/dF (transpose pair of C_PT)
    C_TT : (..., 2, 2, 2, 2, 2, 2), dT/d(grad F)
    """

    W: np.ndarray
    P: np.ndarray
    T: np.ndarray
    D: np.ndarray
    C_PT: np.ndarray
    C_TP: np.ndarray
    C_TT: np.ndarray

    @classmethod
    def zero(cls, batch_shape) -> "PointResponse":
        b = tuple(batch_shape)
        return cls(
            W=np.zeros(b),
            P=np.zeros(b + (2, 2)),
            T=np.zeros(b + (2, 2, 2)),
            D=np.zeros(b + (2, 2, 2, 2)),
            C_PT=np.zeros(b + (2, 2, 2, 2, 2)),
            C_TP=np.zeros(b + (2, 2, 2, 2, 2)),
            C_TT=np.zeros(b + (2, 2, 2, 2, 2, 2)),
        )

    def add(self, other: "PointResponse") -> "PointResponse":
        self.W = self.W + other.W
        self.P = self.P + other.P
        self.T = self.T + other.T
        self.D = self.D + other.D
        self.C_PT = self.C_PT + other.C_PT
        self.C_TP = self.C_TP + other.C_TP
        self.C_TT = self.C_TT + other.C_TT
        return self


def _check_positive_j(j: np.ndarray, context: str) -> None:
    if np.any(j <= 0.0) or not np.all(np.isfinite(j)):
        bad = int(np.count_nonzero(~(j > 0.0)))
        raise InvalidStateError(f"{context}: J <= 0 at {bad} material point(s)")


def _neo_hookean_plane_strain(K: float, G: float, F: np.ndarray, context: str) -> PointResponse:
    """Plane-strain neo-Hookean response with 3D invariants from the embedding.

    J = det F2 (F33 = 1) and I1 = tr(F2^T F2) + 1.  Either coefficient may be
    zero to drop the corresponding term.
    """
    F = np.asarray(F, dtype=float)
    batch = F.shape[:-2]
    J = det2(F)
    _check_positive_j(J, context)
    I1 = np.sum(F * F, axis=(-2, -1)) + 1.0
    Fit = np.swapaxes(inv2(F), -2, -1)
    lnJ = np.log(J)
    Jm23 = J ** (-2.0 / 3.0)

    resp = PointResponse.zero(batch)
    resp.W = 0.5 * K * lnJ**2 + 0.5 * G * (Jm23 * I1 - 3.0)
    resp.P = (
        K * lnJ[..., None, None] * Fit
        + G * Jm23[..., None, None] * (F - (I1 / 3.0)[..., None, None] * Fit)
    )

    # dFit_ij/dF_kl = -Fit_il Fit_kj
    dFit = -np.einsum("...il,...kj->...ijkl", Fit, Fit)
    FitFit = np.einsum("...ij,...kl->...ijkl", Fit, Fit)
    dd = np.einsum("ik,jl->ijkl", _EYE2, _EYE2)
    FitF = np.einsum("...ij,...kl->...ijkl", Fit, F)
    FFit = np.einsum("...ij,...kl->...ijkl", F, Fit)
    resp.D = (
        K * (FitFit + lnJ[..., None, None, None, None] * dFit)
        + G * Jm23[..., None, None, None, None]
        * (
            dd
            - (2.0 / 3.0) * (FFit + FitF)
            + (2.0 / 9.0) * I1[..., None, None, None, None] * FitFit
            - (I1 / 3.0)[..., None, None, None, None] * dFit
        )
    )
    return resp


def bulk_eval(model: BulkModel, F: np.ndarray) -> PointResponse:
    """Bulk neo-Hookean response for plane-strain deformation gradients."""
    return _neo_hookean_plane_strain(model.K, model.G, F, "bulk")


def neo_hookean_3d(K: float, G: float, F3: np.ndarray) -> np.ndarray:
    """First Piola-Kirchhoff stress of the neo-Hookean law for 3x3 F.

    Tensor-form path used by the calibration module, where the lateral
    stretch differs from 1 and the plane-strain embedding does not apply.
    Returns P with shape (..., 3, 3).
    """
    from .tensors import det3, inv3

    F3 = np.asarray(F3, dtype=float)
    J = det3(F3)
    _check_positive_j(J, "neo_hookean_3d")
    I1 = np.sum(F3 * F3, axis=(-2, -1))
    Fit = np.swapaxes(inv3(F3), -2, -1)
    lnJ = np.log(J)
    Jm23 = J ** (-2.0 / 3.0)
    return (
        K * lnJ[..., None, None] * Fit
        + G * Jm23[..., None, None] * (F3 - (I1 / 3.0)[..., None, None] * Fit)
    )


def pneumatic_eval(p, F: np.ndarray) -> PointResponse:
    """Energy linear in the volume ratio: W = p J, P = p cof F, sigma = p I.

    ``p`` here is the energy coefficient (the hydrostatic Cauchy stress the
    medium carries), broadcastable over the batch.  The tangent dP/dF is the
    constant cofactor derivative; higher blocks vanish.
    """
    F = np.asarray(F, dtype=float)
    batch = F.shape[:-2]
    p = np.broadcast_to(np.asarray(p, dtype=float), batch)
    resp = PointResponse.zero(batch)
    resp.W = p * det2(F)
    resp.P = p[..., None, None] * cofactor2(F)
    resp.D = p[..., None, None, None, None] * _DCOF
    return resp


def contact_eval(gamma: float, include_volumetric: bool, F: np.ndarray) -> PointResponse:
    """Compliant neo-Hookean contact term of the third medium.

    W = gamma * [(J^{-2/3} I1 - 3) + optional ln^2 J] with the plane-strain
    embedding; equivalent to the bulk law with both moduli set to 2*gamma.
    """
    if gamma <= 0:
        raise ValueError("contact term requires gamma > 0")
    K = 2.0 * gamma if include_volumetric else 0.0
    return _neo_hookean_plane_strain(K, 2.0 * gamma, F, "third medium contact")


def spin_increment(f: np.ndarray) -> np.ndarray:
    """Material spin increment of a displacement-increment gradient: (f - f^T)/2."""
    f = np.asarray(f, dtype=float)
    return 0.5 * (f - np.swapaxes(f, -2, -1))


def update_grad_ln_q(committed: np.ndarray, grad_f: np.ndarray) -> np.ndarray:
    """Trial rotation-gradient history: committed + skew(grad_f) per gradient slot.

    ``grad_f`` is the material gradient of the incremental displacement
    gradient, measured from the last converged state.  The skew is taken over
    the tensor indices for each gradient slot; the additive update telescopes,
    so an increment followed by its exact negation restores the committed
    value bit-for-bit.
    """
    return np.asarray(committed, dtype=float) + skew_per_gradient(grad_f)


def reg_lnq_eval(c_eff: float, grad_ln_q: np.ndarray) -> PointResponse:
    """Quadratic penalty on the accumulated rotation gradient.

    W = c/2 ||grad_ln_q||^2.  The trial depends on grad F only through its
    per-slot skew part, so T = c * grad_ln_q (already skew) and C_TT is the
    skew projector per gradient slot; P, D and the mixed blocks vanish.
    """
    g = np.asarray(grad_ln_q, dtype=float)
    batch = g.shape[:-3]
    resp = PointResponse.zero(batch)
    resp.W = 0.5 * c_eff * np.sum(g * g, axis=(-3, -2, -1))
    resp.T = c_eff * g
    resp.C_TT = np.broadcast_to(
        c_eff * np.einsum("ijkl,mn->ijmkln", _SKW, _EYE2),
        batch + (2, 2, 2, 2, 2, 2),
    ).copy() if batch else c_eff * np.einsum("ijkl,mn->ijmkln", _SKW, _EYE2)
    return resp


def reg_gradj_eval(c_eff: float, F: np.ndarray, grad_F: np.ndarray) -> PointResponse:
    """Quadratic penalty on the material gradient of J = det F (plane strain).

    With J_,m = cof(F) : grad_F[:, :, m], the plane-strain derivatives are

    * dJ_,m/dF      = cofactor pattern applied to grad_F[:, :, m],
    * dJ_,m/dgradF  = cof(F) on the matching gradient slot,

    and the second derivative of J_,m with respect to F alone (or grad F
    alone) vanishes, so D and C_TT keep only their rank-one product parts
    while the mixed blocks carry a constant-pattern term.
    """
    F = np.asarray(F, dtype=float)
    gF = np.asarray(grad_F, dtype=float)
    batch = F.shape[:-2]
    cof = cofactor2(F)
    # J_,m and dJ_,m/dF_rs (cofactor pattern of each gradient slice)
    Jm = np.einsum("...ij,...ijm->...m", cof, gF)
    G1 = np.einsum("rsij,...ijm->...mrs", _DCOF, gF)  # (..., m, r, s)

    resp = PointResponse.zero(batch)
    resp.W = 0.5 * c_eff * np.sum(Jm * Jm, axis=-1)
    resp.P = c_eff * np.einsum("...m,...mrs->...rs", Jm, G1)
    resp.T = c_eff * np.einsum("...t,...rs->...rst", Jm, cof)
    resp.D = c_eff * np.einsum("...mrs,...muv->...rsuv", G1, G1)
    # C_PT_{rs,uvw} = c [ cof_uv G1^w_rs + J_,w dcof_rs/dF_uv ]
    resp.C_PT = c_eff * (
        np.einsum("...uv,...wrs->...rsuvw", cof, G1)
        + np.einsum("...w,rsuv->...rsuvw", Jm, _DCOF)
    )
    resp.C_TP = c_eff * (
        np.einsum("...tuv,...rs->...rstuv", G1, cof)
        + np.einsum("...t,rsuv->...rstuv", Jm, _DCOF)
    )
    resp.C_TT = np.einsum("...rs,...uv,tw->...rstuvw", cof, cof, c_eff * _EYE2)
    return resp


def reg_gradf_eval(c_eff: float, grad_F: np.ndarray) -> PointResponse:
    """Quadratic penalty on the full second displacement gradient.

    W = c/2 ||grad F||^2; penalizes stretch gradients as well as curvature,
    which stiffens the medium as a whole compared to the rotation-gradient
    variant.
    """
    gF = np.asarray(grad_F, dtype=float)
    batch = gF.shape[:-3]
    resp = PointResponse.zero(batch)
    resp.W = 0.5 * c_eff * np.sum(gF * gF, axis=(-3, -2, -1))
    resp.T = c_eff * gF
    eye8 = np.einsum("ik,jl,mn->ijmkln", _EYE2, _EYE2, _EYE2)
    resp.C_TT = (
        np.broadcast_to(c_eff * eye8, batch + (2, 2, 2, 2, 2, 2)).copy()
        if batch
        else c_eff * eye8
    )
    return resp


def third_medium_eval(
    model: ThirdMediumModel,
    committed_grad_ln_q: np.ndarray | None,
    F: np.ndarray,
    grad_F: np.ndarray,
    grad_f_increment: np.ndarray,
):
    """Full third-medium response and the trial rotation-gradient history.

    Parameters
    ----------
    committed_grad_ln_q : committed history, or None for a zero history.
    F : deformation gradient at the points.
    grad_F : material gradient of F (second displacement gradients).
    grad_f_increment : material gradient of the incremental displacement
        gradient, measured from the last converged state.

    Returns
    -------
    (PointResponse, trial_grad_ln_q)
    """
    F = np.asarray(F, dtype=float)
    batch = F.shape[:-2]
    resp = PointResponse.zero(batch)

    if model.psi_p != 0.0 and model.p != 0.0:
        # Physical pressure difference -> medium stress coefficient -p.
        resp.add(pneumatic_eval(-model.psi_p * model.p, F))
    if model.gamma > 0.0:
        resp.add(contact_eval(model.gamma, model.include_volumetric, F))

    if committed_grad_ln_q is None:
        committed_grad_ln_q = np.zeros(batch + (2, 2, 2))
    trial = update_grad_ln_q(committed_grad_ln_q, grad_f_increment)

    c = model.psi_r
    if c > 0.0:
        if model.regularization == "lnq_plus_gradj":
            resp.add(reg_lnq_eval(c, trial))
            resp.add(reg_gradj_eval(c, F, grad_F))
        elif model.regularization == "gradf":
            resp.add(reg_gradf_eval(c, grad_F))
    return resp, trial
