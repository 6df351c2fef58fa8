"""Independent gradient oracles used to validate the tape.

Three routes are kept deliberately separate from the tape: the layerwise
multiplier recursion for the overhang filter, the adjoint assembly for the
aggregated stress, and plain central finite differences. They exist to check
the automatic gradients, not to drive optimization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import splu

from .amfilter import FilterParams
from .fea import StiffnessSystem, StressAggregate, StressField, constitutive_unit, strain_displacement


@dataclass
class AdjointState:
    """Layer multipliers from the top-down recursion plus the seeded response
    sensitivity w.r.t. printed densities."""

    lambda_layers: list
    g_rho: np.ndarray


def _filter_forward(blueprint: np.ndarray, params: FilterParams):
    """Unclamped smooth-filter sweep, keeping the local partials per layer."""
    p = params.sharpness
    q = params.root_exponent
    eps = params.epsilon
    nely, nelx = blueprint.shape
    rho = np.zeros_like(blueprint)
    rho[0] = blueprint[0]
    ds_db = np.zeros_like(blueprint)
    ds_de = np.zeros_like(blueprint)
    de_ds = np.zeros_like(blueprint)
    for i in range(1, nely):
        padded = np.concatenate([[0.0], rho[i - 1], [0.0]])
        s = padded[:-2] ** p + padded[1:-1] ** p + padded[2:] ** p
        with np.errstate(divide="ignore", invalid="ignore"):
            e = np.where(s > 0, s ** (1.0 / q), 0.0)
            de_ds[i] = np.where(s > 0, (1.0 / q) * s ** (1.0 / q - 1.0), 0.0)
        d = blueprint[i] - e
        root = np.sqrt(d * d + eps)
        rho[i] = 0.5 * (blueprint[i] + e - root + np.sqrt(eps))
        ds_db[i] = 0.5 * (1.0 - d / root)
        ds_de[i] = 0.5 * (1.0 + d / root)
    return rho, ds_db, ds_de, de_ds


def filter_adjoint_state(
    blueprint: np.ndarray, g_rho: np.ndarray, params: FilterParams
) -> AdjointState:
    """Run the top-down multiplier recursion for the smooth filter.

    The top layer's multiplier equals the seeded sensitivity; every lower
    layer adds the back-coupling through the support region of the layer
    above. The recursion runs on the raw surrogate chain (the final [0,1]
    clamp passes gradients straight through), so no masking is applied.
    """
    blueprint = np.asarray(blueprint, dtype=float)
    g_rho = np.asarray(g_rho, dtype=float)
    if blueprint.shape != g_rho.shape:
        raise ValueError(
            f"blueprint {blueprint.shape} and sensitivity {g_rho.shape} shapes differ"
        )
    nely, nelx = blueprint.shape
    if nely == 1:
        return AdjointState([g_rho[0].copy()], g_rho)
    rho, _ds_db, ds_de, de_ds = _filter_forward(blueprint, params)
    geff = g_rho
    p = params.sharpness
    lam = [None] * nely
    lam[nely - 1] = geff[nely - 1].copy()
    for k in range(nely - 2, -1, -1):
        t = lam[k + 1] * ds_de[k + 1] * de_ds[k + 1]
        padded = np.concatenate([[0.0], t, [0.0]])
        spread = padded[:-2] + padded[1:-1] + padded[2:]
        with np.errstate(divide="ignore", invalid="ignore"):
            dpow = np.where(rho[k] > 0, p * rho[k] ** (p - 1.0), 0.0)
        lam[k] = geff[k] + spread * dpow
    return AdjointState(lam, g_rho)


def filter_adjoint_gradient(
    blueprint: np.ndarray, g_rho: np.ndarray, params: FilterParams
) -> np.ndarray:
    """d(response)/d(blueprint) given d(response)/d(printed), per Lagrange
    multipliers chosen to cancel the cross-layer Jacobians."""
    blueprint = np.asarray(blueprint, dtype=float)
    state = filter_adjoint_state(blueprint, g_rho, params)
    nely = blueprint.shape[0]
    if nely == 1:
        return np.asarray(g_rho, dtype=float).copy()
    _rho, ds_db, _ds_de, _de_ds = _filter_forward(blueprint, params)
    grad = np.zeros_like(blueprint)
    grad[0] = state.lambda_layers[0]
    for m in range(1, nely):
        grad[m] = state.lambda_layers[m] * ds_db[m]
    return grad


def compliance_density_gradient(system: StiffnessSystem) -> np.ndarray:
    """dC/drho_e = -dE/drho_e * u_e^T KE0 u_e (self-adjoint load case)."""
    ue = system.u[system.dof_map]
    quad = np.einsum("ej,jk,ek->e", ue, system.KE0, ue)
    return -system.mat.modulus_derivative(system.rho) * quad


def stress_adjoint_gradient(
    system: StiffnessSystem, stress: StressField, agg: StressAggregate, mat
) -> np.ndarray:
    """d(sigma_PN)/d(rho) via the adjoint equation of the aggregated stress.

    Chains the p-norm derivative through the per-element von Mises stresses,
    solves K lam = -(d sigma_PN/d u)^T once, and adds the direct modulus
    pathway from the sqrt(E) scaling. Elements with a von Mises stress below
    1e-12 are excluded (their ratio cannot influence the aggregate).
    """
    u, rho = system.u, system.rho
    n = rho.shape[0]
    vm = stress.von_mises.value
    vm0 = stress.von_mises_unit.value
    e_mod = stress.modulus.value
    ratios = vm / agg.sigma_allow
    s = float(np.sum(ratios ** agg.exponent))
    if s == 0.0:
        return np.zeros(n)
    coeff = (
        (s / n) ** (1.0 / agg.exponent - 1.0)
        * (1.0 / n)
        * ratios ** (agg.exponent - 1.0)
        / agg.sigma_allow
    )

    sxx, syy, sxy = stress.sxx.value, stress.syy.value, stress.sxy.value
    active = vm0 > 1e-12
    dvm0 = np.zeros((n, 3))
    dvm0[active, 0] = (2.0 * sxx[active] - syy[active]) / (2.0 * vm0[active])
    dvm0[active, 1] = (2.0 * syy[active] - sxx[active]) / (2.0 * vm0[active])
    dvm0[active, 2] = 6.0 * sxy[active] / (2.0 * vm0[active])

    sm = constitutive_unit(mat.nu) @ strain_displacement(0.0, 0.0)
    dvm_du = np.sqrt(e_mod)[:, None] * (dvm0 @ sm)

    rhs = np.zeros(system.u.shape[0])
    np.add.at(rhs, system.dof_map, -coeff[:, None] * dvm_du)
    lam = np.zeros_like(rhs)
    lam[system.free_dofs] = splu(system.K).solve(rhs[system.free_dofs])

    de = mat.modulus_derivative(rho)
    ue = u[system.dof_map]
    le = lam[system.dof_map]
    term_state = de * np.einsum("ej,jk,ek->e", le, system.KE0, ue)
    term_direct = np.where(active, coeff * vm0 / (2.0 * np.sqrt(e_mod)) * de, 0.0)
    return term_state + term_direct


def finite_difference_gradient(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences, one coordinate at a time.

    Coordinates whose perturbed evaluations are non-finite come back as nan.
    """
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        fp = f(x)
        xf[i] = orig - h
        fm = f(x)
        xf[i] = orig
        flat[i] = (fp - fm) / (2.0 * h) if np.isfinite(fp) and np.isfinite(fm) else np.nan
    return grad
