"""Finite-element operators on the structured grid.

Stiffness matrices come from bilinear/trilinear elements on the box
cells with a cellwise-constant symmetric conductivity tensor and
2-point Gauss quadrature per axis (exact for these integrands).  The
mass matrix is lumped to the tensor-trapezoid weights, which is the
row-sum lumping of the consistent element mass and keeps the operator
algebra consistent with ``grid.integrate``.

The reduced bidomain operator is a Schur complement: applying A_h to u
solves the intra+extra stiffness system K_ie psi = K_i u and returns
K_i u - K_i psi, which collapses to (lam/(1+lam)) K_i u whenever the
extracellular tensor is lam times the intracellular one.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.sparse as sp

from .grid import Grid, ScalarField, TensorField
from .linalg import SolverError, cg_solve

__all__ = [
    "EllipticityError",
    "CompatibilityError",
    "SolverError",
    "SystemOperators",
    "ellipticity_check",
    "assemble_stiffness",
    "assemble_mass",
    "check_operator",
    "build_operators",
    "monodomain_form",
    "cg_solve",
    "solve_neumann",
    "bidomain_elliptic_solve",
    "reduced_rhs_S",
    "reduced_operator",
]


class EllipticityError(ValueError):
    """Conductivity tensor is not symmetric positive definite on some cell."""


class CompatibilityError(ValueError):
    """A pure-Neumann load does not integrate to zero."""


def ellipticity_check(tensor):
    """Validate a tensor field and return (mu1, mu2) eigenvalue bounds.

    mu1 is the smallest eigenvalue over all cells, mu2 the largest;
    both are cached on the tensor.  Raises EllipticityError for
    non-symmetric or non-positive-definite cells.
    """
    e = tensor.entries
    scale = float(np.max(np.abs(e))) or 1.0
    if float(np.max(np.abs(e - np.swapaxes(e, 1, 2)))) > 1e-12 * scale:
        raise EllipticityError("tensor has a non-symmetric cell")
    eigs = np.linalg.eigvalsh(e)
    mu1 = float(eigs[:, 0].min())
    mu2 = float(eigs[:, -1].max())
    if mu1 <= 0.0:
        raise EllipticityError(f"tensor is not uniformly elliptic (min eigenvalue {mu1:g})")
    tensor.mu1, tensor.mu2 = mu1, mu2
    return mu1, mu2


def _reference_gradients(dim):
    """Shape-function gradients at the tensor-product Gauss points.

    Returns (G, w) with G of shape (n_gauss, 2**dim, dim) on the unit
    reference cell and w the Gauss weights (sum 1).
    """
    offset = 0.5 / np.sqrt(3.0)
    pts_1d = (0.5 - offset, 0.5 + offset)
    corners = list(product((0, 1), repeat=dim))
    gauss = list(product(pts_1d, repeat=dim))
    G = np.empty((len(gauss), len(corners), dim))
    for gi, xi in enumerate(gauss):
        for ci, bits in enumerate(corners):
            for k in range(dim):
                val = 1.0
                for j in range(dim):
                    if j == k:
                        continue
                    val *= xi[j] if bits[j] else 1.0 - xi[j]
                G[gi, ci, k] = val if bits[k] else -val
    w = np.full(len(gauss), 1.0 / len(gauss))
    return G, w


def _cell_connectivity(grid):
    """Node indices of each cell's corners, shape (n_cells, 2**dim)."""
    cells_shape = tuple(n - 1 for n in grid.nodes_per_axis)
    base = np.indices(cells_shape).reshape(grid.dim, -1).T
    conn = np.empty((grid.n_cells, 2**grid.dim), dtype=np.int64)
    for ci, bits in enumerate(product((0, 1), repeat=grid.dim)):
        conn[:, ci] = np.ravel_multi_index(
            tuple(base[:, k] + bits[k] for k in range(grid.dim)), grid.nodes_per_axis
        )
    return conn


def assemble_stiffness(grid, tensor):
    """Assemble the stiffness matrix for int grad(u)^T M grad(v) dx."""
    if tensor.mu1 is None:
        ellipticity_check(tensor)
    G, w = _reference_gradients(grid.dim)
    Gp = G / np.asarray(grid.h)  # physical gradients
    Ke = grid.cell_volume * np.einsum(
        "g,gak,ckm,gbm->cab", w, Gp, tensor.entries, Gp, optimize=True
    )
    conn = _cell_connectivity(grid)
    nloc = conn.shape[1]
    rows = np.repeat(conn, nloc, axis=1).ravel()
    cols = np.tile(conn, (1, nloc)).ravel()
    K = sp.coo_matrix(
        (Ke.ravel(), (rows, cols)), shape=(grid.n_nodes, grid.n_nodes)
    ).tocsr()
    K = 0.5 * (K + K.T)
    return check_operator(K.tocsr())


def assemble_mass(grid):
    """Lumped mass diagonal (equals the quadrature weights)."""
    return grid.weights.copy()


def check_operator(K):
    """Validate that an assembled operator is square and symmetric."""
    n, m = K.shape
    if n != m:
        raise ValueError(f"operator is not square: {K.shape}")
    defect = sp.csr_matrix(K - K.T)
    scale = float(np.max(np.abs(K.data))) if K.nnz else 1.0
    if defect.nnz and float(np.max(np.abs(defect.data))) > 1e-12 * scale:
        raise ValueError("operator is not symmetric")
    return K


@dataclass
class SystemOperators:
    """Assembled operators for one conductivity configuration.

    K_i is the intracellular stiffness, K_ie the combined
    intra+extracellular stiffness (None for monodomain-only use), mass
    the lumped diagonal, riesz the dual-norm lift K(identity) + M, and
    lam the extra/intra conductivity ratio used by the monodomain
    reduction.
    """

    grid: Grid
    mass: np.ndarray
    K_i: sp.csr_matrix
    riesz: sp.csr_matrix
    lam: float
    K_ie: sp.csr_matrix | None = None
    mi: TensorField | None = None
    me: TensorField | None = None

    def __post_init__(self):
        self.Ki_diag = self.K_i.diagonal()
        self.Kie_diag = self.K_ie.diagonal() if self.K_ie is not None else None


def build_operators(grid, mi, me=None, lam=1.0):
    """Assemble SystemOperators from intra (and optional extra) tensors."""
    ellipticity_check(mi)
    K_i = assemble_stiffness(grid, mi)
    K_ie = None
    if me is not None:
        ellipticity_check(me)
        K_ie = assemble_stiffness(grid, mi + me)
    mass = assemble_mass(grid)
    riesz = assemble_stiffness(grid, TensorField.isotropic(grid, 1.0)) + sp.diags(mass)
    return SystemOperators(
        grid=grid,
        mass=mass,
        K_i=K_i,
        riesz=riesz.tocsr(),
        lam=float(lam),
        K_ie=K_ie,
        mi=mi,
        me=me,
    )


def _values(u):
    return u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)


def monodomain_form(ops, u, v):
    """The monodomain bilinear form (lam/(1+lam)) int grad(u)^T M_i grad(v)."""
    uu, vv = _values(u), _values(v)
    return float(ops.lam / (1.0 + ops.lam) * (uu @ (ops.K_i @ vv)))


def solve_neumann(K, load_vec, *, weights, measure, diag=None, tol=1e-11, x0=None):
    """Solve the singular pure-Neumann system K x = load, weighted zero-mean gauge.

    The load is compatibilized exactly (its Euclidean mean is removed,
    a roundoff-level correction for admissible loads), CG runs with
    constant deflation, and the returned field integrates to zero.
    """
    load_vec = load_vec - load_vec.sum() / load_vec.size
    x = cg_solve(K, load_vec, tol=tol, diag=diag, deflate=True, x0=x0)
    return x - (weights @ x) / measure


def bidomain_elliptic_solve(ops, load, *, nodal=True, tol=1e-11, x0=None):
    """Solve K_ie phi_e = load with zero-flux boundaries and zero-mean gauge.

    ``load`` is a nodal field (functional values; paired through the
    lumped weights) unless ``nodal=False``, in which case it is already
    an assembled load vector.  Loads whose total exceeds 1e-8 times
    their norm are rejected as incompatible.
    """
    if ops.K_ie is None:
        raise ValueError("operators were built without an extracellular tensor")
    is_field = isinstance(load, ScalarField)
    lv = _values(load)
    if nodal:
        lv = ops.mass * lv
    norm = float(np.linalg.norm(lv))
    if norm == 0.0:
        out = np.zeros(ops.grid.n_nodes)
        return ScalarField(ops.grid, out) if is_field else out
    total = float(lv.sum())
    if abs(total) > 1e-8 * norm:
        raise CompatibilityError(
            f"elliptic load integrates to {total:.3e} (norm {norm:.3e}); "
            "enforce compatibility first"
        )
    x = solve_neumann(
        ops.K_ie,
        lv,
        weights=ops.grid.weights,
        measure=ops.grid.measure,
        diag=ops.Kie_diag,
        tol=tol,
        x0=x0,
    )
    return ScalarField(ops.grid, x) if is_field else x


def reduced_rhs_S(ops, I_i, I_e, *, tol=1e-11, cache=None):
    """Forcing load of the reduced transmembrane system.

    Lifts the total current I_i + I_e through the extracellular solve
    (psi_e, zero-mean) and returns the load vector Mass I_i - K_i psi_e.
    With M_e = lam M_i this equals Mass (lam I_i - I_e)/(1+lam), the
    monodomain forcing.
    """
    ii, ie = _values(I_i), _values(I_e)
    x0 = cache.get("psibar") if cache is not None else None
    psibar = bidomain_elliptic_solve(ops, ii + ie, nodal=True, tol=tol, x0=x0)
    if cache is not None:
        cache["psibar"] = psibar
    return ops.mass * ii - ops.K_i @ psibar


def reduced_operator(ops, dt, *, tol=1e-11):
    """Matrix-free application of Mass + dt * A_h plus a preconditioner diagonal.

    A_h is the Schur complement K_i - K_i K_ie^+ K_i; each application
    performs one deflated inner CG solve with K_ie.  The preconditioner
    diagonal is diag(Mass + dt K_i), a spectrally equivalent upper
    surrogate for the unavailable Schur diagonal.
    """
    K_i, K_ie, mass = ops.K_i, ops.K_ie, ops.mass
    kie_diag = ops.Kie_diag

    def apply(v):
        Kv = K_i @ v
        psi = cg_solve(K_ie, Kv, tol=tol, diag=kie_diag, deflate=True)
        return mass * v + dt * (Kv - K_i @ psi)

    return apply, mass + dt * ops.Ki_diag
