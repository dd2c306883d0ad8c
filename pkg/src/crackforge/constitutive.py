"""Pointwise phase-field constitutive functions and derived parameters.

The damage variable phi runs from 0 (intact) to 1 (fully cracked).  The
geometric crack function alpha(phi) = xi*phi + (1-xi)*phi^2 shapes the
local term of the crack density

    gamma(phi, grad phi) = (1/c0) * (alpha(phi)/l0 + l0*|grad phi|^2),

and the rational degradation function

    omega(phi) = (1-phi)^2 / ((1-phi)^2 + a1*phi*(1 + a2*phi))

weakens the stiffness.  With xi = 2, c0 = pi, a2 = -1/2 and
a1 = 4*l_ch/(c0*l0), l_ch = E0*Gf/ft^2, the response is insensitive to the
regularization length l0: damage initiates when the tensile driving
energy reaches ft^2/(2*E0) regardless of l0.

Damage is driven by the positive part of the major principal effective
(undegraded) stress, and irreversibility is enforced through a history
field holding the running maximum of that driving energy at each
quadrature point.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .mesh import GAUSS3_BARY, Mesh, element_geometry


class OutOfRange(ValueError):
    """Damage value outside [0, 1]."""


class NonPositiveInput(ValueError):
    """Constitutive constants must be positive (and nu inside (0, 0.5))."""


@dataclass(frozen=True)
class PhaseFieldParams:
    """All constitutive constants plus the derived a1 and l_ch."""

    e0: float
    nu: float
    gf: float
    ft: float
    l0: float
    xi: float = 2.0
    a2: float = -0.5
    c0: float = np.pi
    omega_floor: float = 1e-6
    l_ch: float = 0.0  # derived, set by derive_params
    a1: float = 0.0    # derived, set by derive_params


def derive_params(e0: float, nu: float, gf: float, ft: float, l0: float,
                  omega_floor: float = 1e-6) -> PhaseFieldParams:
    """Fill in l_ch = E0*Gf/ft^2 and a1 = 4*l_ch/(c0*l0)."""
    for name, val in (("e0", e0), ("gf", gf), ("ft", ft), ("l0", l0)):
        if not val > 0:
            raise NonPositiveInput(f"{name} must be positive, got {val}")
    if not 0.0 < nu < 0.5:
        raise NonPositiveInput(f"nu must lie in (0, 0.5), got {nu}")
    l_ch = e0 * gf / ft**2
    c0 = np.pi
    a1 = 4.0 * l_ch / (c0 * l0)
    return PhaseFieldParams(e0=e0, nu=nu, gf=gf, ft=ft, l0=l0, c0=c0,
                            omega_floor=omega_floor, l_ch=l_ch, a1=a1)


def _check_phi(phi):
    p = np.asarray(phi, dtype=np.float64)
    if np.any(p < -1e-12) or np.any(p > 1.0 + 1e-12):
        raise OutOfRange("phi must lie in [0, 1]")
    return np.clip(p, 0.0, 1.0)


def geometric_crack_fn(phi, params: PhaseFieldParams):
    """alpha(phi) and alpha'(phi).  With xi = 2: alpha = 2*phi - phi^2."""
    p = _check_phi(phi)
    xi = params.xi
    return xi * p + (1.0 - xi) * p * p, xi + 2.0 * (1.0 - xi) * p


def degradation_fn(phi, params: PhaseFieldParams):
    """omega(phi) and omega'(phi) by the quotient rule.

    The stiffness assembly clamps omega at params.omega_floor to keep the
    linear system nonsingular at fully broken points; the exact derivative
    returned here is what the damage driving force uses.
    """
    p = _check_phi(phi)
    a1, a2 = params.a1, params.a2
    u = (1.0 - p) ** 2
    du = -2.0 * (1.0 - p)
    v = u + a1 * p * (1.0 + a2 * p)
    dv = du + a1 * (1.0 + 2.0 * a2 * p)
    return u / v, (du * v - u * dv) / v**2


def degradation_second_derivative(phi, params: PhaseFieldParams):
    """omega''(phi), needed by the damage Newton Jacobian."""
    p = _check_phi(phi)
    a1, a2 = params.a1, params.a2
    u = (1.0 - p) ** 2
    du = -2.0 * (1.0 - p)
    ddu = 2.0
    v = u + a1 * p * (1.0 + a2 * p)
    dv = du + a1 * (1.0 + 2.0 * a2 * p)
    ddv = 2.0 + 2.0 * a1 * a2
    return ((ddu * v - u * ddv) * v - 2.0 * dv * (du * v - u * dv)) / v**3


def plane_strain_matrix(e: float, nu: float) -> np.ndarray:
    """Isotropic plane-strain elasticity matrix in Voigt order (xx, yy, xy)."""
    f = e / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return f * np.array([
        [1.0 - nu, nu, 0.0],
        [nu, 1.0 - nu, 0.0],
        [0.0, 0.0, (1.0 - 2.0 * nu) / 2.0],
    ])


def major_principal_stress(sigma_voigt: np.ndarray) -> np.ndarray:
    """Larger in-plane eigenvalue of symmetric stress in Voigt order."""
    s = np.asarray(sigma_voigt, dtype=np.float64)
    mean = 0.5 * (s[..., 0] + s[..., 1])
    rad = np.hypot(0.5 * (s[..., 0] - s[..., 1]), s[..., 2])
    return mean + rad


def crack_driving_energy(effective_stress, e0_local) -> float:
    """Tensile driving energy (max{0, sigma_1})^2 / (2 E0) from a 2x2 tensor.

    effective_stress is the undegraded stress; e0_local the local (rigidity
    scaled) Young's modulus.
    """
    t = np.asarray(effective_stress, dtype=np.float64)
    sv = np.stack([t[..., 0, 0], t[..., 1, 1], t[..., 0, 1]], axis=-1)
    s1 = major_principal_stress(sv)
    val = np.maximum(s1, 0.0) ** 2 / (2.0 * np.asarray(e0_local))
    return float(val) if val.ndim == 0 else val


def driving_energy_voigt(sigma_voigt: np.ndarray, e0_local) -> np.ndarray:
    """Same driving energy, for Voigt-ordered stresses (solver fast path)."""
    s1 = major_principal_stress(sigma_voigt)
    return np.maximum(s1, 0.0) ** 2 / (2.0 * np.asarray(e0_local))


@dataclass(frozen=True)
class QuadraturePointState:
    """Per-quadrature-point record: history plus the latest strain/stress."""

    history: float
    strain: np.ndarray = None        # 2x2 symmetric
    effective_stress: np.ndarray = None  # 2x2 symmetric, undegraded


def update_history(state: QuadraturePointState, new_energy: float) -> QuadraturePointState:
    """history <- max(history, new_energy); everything else unchanged."""
    return replace(state, history=max(state.history, new_energy))


def crack_density(phi, grad_phi, params: PhaseFieldParams):
    """gamma(phi, grad phi) = (alpha/l0 + l0*|grad phi|^2) / c0."""
    alpha, _ = geometric_crack_fn(phi, params)
    g = np.asarray(grad_phi, dtype=np.float64)
    g2 = (g * g).sum(axis=-1)
    return (alpha / params.l0 + params.l0 * g2) / params.c0


def regularized_crack_surface(mesh: Mesh, nodal_phi: np.ndarray,
                              params: PhaseFieldParams) -> float:
    """Total regularized crack surface: 3-point Gauss quadrature of gamma.

    Exact for the quadratic alpha of a P1 damage field; approximates the
    crack length (a unit-length crack with the optimal profile integrates
    to 1).
    """
    phi = np.asarray(nodal_phi, dtype=np.float64)
    areas, grads = element_geometry(mesh)
    phi_e = phi[mesh.elements]                      # (ne, 3)
    phi_q = phi_e @ GAUSS3_BARY.T                   # (ne, 3) values at Gauss points
    grad_phi = np.einsum("ea,ead->ed", phi_e, grads)  # constant per element
    g2 = (grad_phi * grad_phi).sum(axis=1)
    alpha_q, _ = geometric_crack_fn(np.clip(phi_q, 0.0, 1.0), params)
    per_elem = (alpha_q.mean(axis=1) / params.l0 + params.l0 * g2) / params.c0
    return float((per_elem * areas).sum())
