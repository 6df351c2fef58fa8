"""SIMP plane-stress finite elements on the tape.

Forward quantities (element moduli, displacements, compliance, centroid
stresses, von Mises aggregation) are recorded as differentiable operations so
a single backward pass yields design sensitivities. The global stiffness is
assembled sparse and factorized once per solve; the factorization also serves
the adjoint solve in the backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import autodiff as ad
from .autodiff import DiffValue, SolverFailureError
from .meshgraph import StructuredMesh

_GAUSS = 1.0 / np.sqrt(3.0)
_XI = np.array([-1.0, 1.0, 1.0, -1.0])
_ETA = np.array([-1.0, -1.0, 1.0, 1.0])


@dataclass(frozen=True)
class MaterialModel:
    """SIMP material interpolation E(rho) = Emin + rho^penal (E0 - Emin)."""

    E0: float = 1.0
    Emin: float = 1e-9
    nu: float = 0.3
    penal: float = 3.0

    def __post_init__(self):
        if not 0.0 < self.Emin < self.E0:
            raise ValueError("need 0 < Emin < E0")
        if not 0.0 < self.nu < 0.5:
            raise ValueError("need 0 < nu < 0.5")
        if self.penal < 1.0:
            raise ValueError("need penal >= 1")

    def modulus(self, rho: np.ndarray) -> np.ndarray:
        return self.Emin + rho ** self.penal * (self.E0 - self.Emin)

    def modulus_derivative(self, rho: np.ndarray) -> np.ndarray:
        return self.penal * rho ** (self.penal - 1.0) * (self.E0 - self.Emin)


def constitutive_unit(nu: float) -> np.ndarray:
    """Plane-stress constitutive matrix for unit Young's modulus."""
    return (1.0 / (1.0 - nu * nu)) * np.array(
        [[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1.0 - nu) / 2.0]]
    )


def strain_displacement(xi: float, eta: float, elem_size: float = 1.0) -> np.ndarray:
    """B matrix (3x8) of the bilinear quad at local coordinates (xi, eta)."""
    dn_dx = 0.25 * _XI * (1.0 + eta * _ETA) * (2.0 / elem_size)
    dn_dy = 0.25 * _ETA * (1.0 + xi * _XI) * (2.0 / elem_size)
    b = np.zeros((3, 8))
    b[0, 0::2] = dn_dx
    b[1, 1::2] = dn_dy
    b[2, 0::2] = dn_dy
    b[2, 1::2] = dn_dx
    return b


def element_stiffness_unit(nu: float, elem_size: float = 1.0) -> np.ndarray:
    """8x8 element stiffness for E = 1 by 2x2 Gauss quadrature.

    Symmetric with exactly three rigid-body zero modes; independent of
    elem_size for square elements (unit thickness).
    """
    if not 0.0 < nu < 0.5:
        raise ValueError("need 0 < nu < 0.5")
    d0 = constitutive_unit(nu)
    detj = elem_size * elem_size / 4.0
    ke = np.zeros((8, 8))
    for xi in (-_GAUSS, _GAUSS):
        for eta in (-_GAUSS, _GAUSS):
            b = strain_displacement(xi, eta, elem_size)
            ke += b.T @ d0 @ b * detj
    return 0.5 * (ke + ke.T)


def simp_modulus(rho: DiffValue, mat: MaterialModel) -> DiffValue:
    """Differentiable SIMP modulus per element."""
    rv = rho.value
    if np.any(rv < -1e-9) or np.any(rv > 1.0 + 1e-9):
        raise ValueError(
            f"densities outside [0,1]: min {rv.min():.3e}, max {rv.max():.3e}"
        )
    return ad.power(rho, mat.penal) * (mat.E0 - mat.Emin) + mat.Emin


class SimpAssembler:
    """Assembles the reduced global stiffness from densities and supplies the
    density chain rule for the linear-solve adjoint."""

    def __init__(self, mesh: StructuredMesh, mat: MaterialModel, fixed_dofs):
        self.mesh = mesh
        self.mat = mat
        self.ke0 = element_stiffness_unit(mat.nu, mesh.elem_size)
        self.fixed_dofs = np.unique(np.asarray(fixed_dofs, dtype=np.int64))
        if self.fixed_dofs.size and (
            self.fixed_dofs.min() < 0 or self.fixed_dofs.max() >= mesh.n_dofs
        ):
            raise ValueError("fixed DOF index out of range")
        self.free_dofs = np.setdiff1d(np.arange(mesh.n_dofs), self.fixed_dofs)
        self._rows = np.repeat(mesh.dof_map, 8, axis=1).ravel()
        self._cols = np.tile(mesh.dof_map, (1, 8)).ravel()
        self._last_reduced: sp.csc_array | None = None

    def assemble(self, rho: np.ndarray) -> sp.csc_array:
        e_mod = self.mat.modulus(np.asarray(rho, dtype=float))
        vals = (e_mod[:, None] * self.ke0.ravel()[None, :]).ravel()
        n = self.mesh.n_dofs
        full = sp.coo_array((vals, (self._rows, self._cols)), shape=(n, n)).tocsc()
        reduced = full[self.free_dofs][:, self.free_dofs].tocsc()
        self._last_reduced = reduced
        return reduced

    def factorize(self, rho: np.ndarray):
        if self.free_dofs.size == 0:
            raise SolverFailureError("no free DOFs to solve for")
        reduced = self.assemble(rho)
        try:
            factor = splu(reduced)
        except RuntimeError as err:
            raise SolverFailureError(
                f"reduced stiffness is singular (smallest pivot 0): {err}"
            ) from err
        pivots = factor.U.diagonal()
        smallest = pivots[np.argmin(np.abs(pivots))]
        if abs(smallest) < 1e-12 * np.abs(pivots).max():
            raise SolverFailureError(
                f"reduced stiffness is singular or indefinite; smallest pivot {smallest:.6e}"
            )
        return factor

    def solve(self, factor, rhs_full: np.ndarray) -> np.ndarray:
        out = np.zeros(self.mesh.n_dofs)
        out[self.free_dofs] = factor.solve(rhs_full[self.free_dofs])
        return out

    def density_vjp(
        self, rho: np.ndarray, u: np.ndarray, lam: np.ndarray
    ) -> np.ndarray:
        ue = u[self.mesh.dof_map]
        le = lam[self.mesh.dof_map]
        quad = np.einsum("ej,jk,ek->e", le, self.ke0, ue)
        return -self.mat.modulus_derivative(rho) * quad


@dataclass
class StiffnessSystem:
    """Solve byproducts kept for verification and the analytic oracles."""

    K: sp.csc_array
    f: np.ndarray
    fixed_dofs: np.ndarray
    free_dofs: np.ndarray
    u: np.ndarray
    KE0: np.ndarray
    dof_map: np.ndarray
    rho: np.ndarray
    mat: MaterialModel


def assemble_and_solve(
    rho: DiffValue,
    mesh: StructuredMesh,
    mat: MaterialModel,
    fixed_dofs,
    f: np.ndarray,
) -> tuple[DiffValue, StiffnessSystem]:
    """Assemble K(rho), solve the equilibrium system, return (u, system).

    u is a full-length differentiable vector with exact zeros on fixed DOFs.
    Requires at least 3 constrained DOFs (no rigid-body motion).
    """
    assembler = SimpAssembler(mesh, mat, fixed_dofs)
    if assembler.fixed_dofs.size < 3:
        raise SolverFailureError(
            f"under-constrained system: {assembler.fixed_dofs.size} fixed DOFs (need >= 3)"
        )
    f = np.asarray(f, dtype=float)
    if f.shape != (mesh.n_dofs,):
        raise ValueError(f"load vector must have shape ({mesh.n_dofs},)")
    u = ad.linear_solve(assembler, rho, f)
    system = StiffnessSystem(
        K=assembler._last_reduced,
        f=f,
        fixed_dofs=assembler.fixed_dofs,
        free_dofs=assembler.free_dofs,
        u=u.value,
        KE0=assembler.ke0,
        dof_map=mesh.dof_map,
        rho=np.array(rho.value),
        mat=mat,
    )
    return u, system


def compliance(u: DiffValue, f: np.ndarray) -> DiffValue:
    """External work f^T u."""
    return ad.total(u * np.asarray(f, dtype=float))


@dataclass
class StressField:
    """Centroid stresses: unit-modulus components and sqrt(E)-scaled von Mises."""

    sxx: DiffValue
    syy: DiffValue
    sxy: DiffValue
    von_mises_unit: DiffValue
    von_mises: DiffValue
    modulus: DiffValue
    D0: np.ndarray
    Bmat: np.ndarray

    @property
    def sigma_components(self) -> np.ndarray:
        return np.column_stack([self.sxx.value, self.syy.value, self.sxy.value])


def centroid_stress(
    u: DiffValue, rho: DiffValue, mesh: StructuredMesh, mat: MaterialModel
) -> StressField:
    """Per-element centroid stress with stiffness-consistent scaling.

    Components come from the unit-modulus constitutive matrix applied to the
    element displacements; the von Mises scalar is then scaled by sqrt(E_e)
    so void elements do not attract spurious stress.
    """
    d0 = constitutive_unit(mat.nu)
    bmat = strain_displacement(0.0, 0.0, mesh.elem_size)
    sm = d0 @ bmat
    ue = ad.gather(u, mesh.dof_map)
    sxx = ad.matmul(ue, sm[0])
    syy = ad.matmul(ue, sm[1])
    sxy = ad.matmul(ue, sm[2])
    vm_sq = sxx * sxx + syy * syy - sxx * syy + 3.0 * (sxy * sxy)
    vm_unit = ad.sqrt(vm_sq)
    e_mod = simp_modulus(rho, mat)
    vm = vm_unit * ad.sqrt(e_mod)
    return StressField(sxx, syy, sxy, vm_unit, vm, e_mod, d0, bmat)


@dataclass(frozen=True)
class StressAggregate:
    """Global p-norm aggregation of the von Mises stress ratio."""

    sigma_allow: float
    exponent: float = 8.0
    n_regions: int = field(default=1)

    def __post_init__(self):
        if self.sigma_allow <= 0:
            raise ValueError("sigma_allow must be positive")
        if self.exponent < 2:
            raise ValueError("aggregation exponent must be >= 2")
        if self.n_regions != 1:
            raise ValueError("only a single global aggregation region is supported")


def p_norm_stress(stress: StressField, agg: StressAggregate) -> DiffValue:
    """sigma_PN = ((1/N) sum (vm_e / sigma_allow)^p)^(1/p) - 1.

    Evaluated with the largest ratio factored out as a constant so the power
    sum cannot overflow on degenerate intermediate designs; the p-norm is
    1-homogeneous, so the factoring changes neither value nor gradient.
    """
    vm = stress.von_mises.value
    n = vm.shape[0]
    peak = float(vm.max()) / agg.sigma_allow
    if peak == 0.0:
        return ad.total(stress.von_mises * 0.0) - 1.0
    scaled = stress.von_mises * (1.0 / (agg.sigma_allow * peak))
    mean_pow = ad.total(ad.power(scaled, agg.exponent)) * (1.0 / n)
    return peak * ad.power(mean_pow, 1.0 / agg.exponent) - 1.0
