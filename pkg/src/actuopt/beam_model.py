"""Simply supported Euler-Bernoulli beam on an elastic foundation.

Model (position w, velocity v = w_t on (0, l), w = w_xx = 0 at the ends):

    rho_a w_tt + (EI w_xx + c_d v_xx)_xx + mu v + k w + alpha w^3 = b(xi; r) u(t)

discretized by second differences at the interior nodes xi_i = i*dx,
i = 1..n_cells-1. Simple support gives the ghost reflection w_{-1} = -w_1,
so the biharmonic stencil is exactly D2 @ D2 with D2 the Dirichlet
Laplacian. The energy form

    |x|^2 = int EI w_xx^2 + k w^2 + rho_a v^2 dxi

is assembled with trapezoid weights from the same difference operators, so
the undamped system operator is exactly skew-adjoint in the Gram matrix.

The control influence b(xi; r) is a raised-cosine bump of unit mass,
centered at the design point r, C^1 in r with a closed-form derivative.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core_system import CostSpec, Discretization


@dataclass(frozen=True)
class BeamParams:
    ei: float = 1.0
    rho_a: float = 1.0
    length: float = 1.0
    k: float = 1.0
    alpha: float = 1.0
    mu: float = 0.1
    c_d: float = 0.01
    n_cells: int = 64

    def __post_init__(self):
        for name in ("ei", "rho_a", "length"):
            val = getattr(self, name)
            if not (val > 0.0 and math.isfinite(val)):
                raise ValueError(f"BeamParams.{name} must be positive, got {val}")
        for name in ("k", "alpha", "mu", "c_d"):
            val = getattr(self, name)
            if not (val >= 0.0 and math.isfinite(val)):
                raise ValueError(f"BeamParams.{name} must be >= 0, got {val}")
        if self.n_cells < 8:
            raise ValueError(f"BeamParams.n_cells must be >= 8, got {self.n_cells}")

    @property
    def dx(self):
        return self.length / self.n_cells

    @property
    def nodes(self):
        """Interior node coordinates (the w/v dof locations)."""
        return self.dx * np.arange(1, self.n_cells)


@dataclass(frozen=True)
class BeamActuator:
    """Actuator design: bump center r and fixed half-width."""

    r: float
    width: float = 0.05

    def __post_init__(self):
        if not (self.width > 0.0 and math.isfinite(self.width)):
            raise ValueError(f"actuator width must be positive, got {self.width}")
        if not math.isfinite(self.r):
            raise ValueError("actuator center must be finite")


@functools.lru_cache(maxsize=32)
def _matrices(params: BeamParams):
    """Cached difference operators and factorizations for one parameter set."""
    m = params.n_cells - 1
    dx = params.dx
    d2 = sp.diags(
        [np.ones(m - 1), -2.0 * np.ones(m), np.ones(m - 1)],
        offsets=[-1, 0, 1],
        format="csr",
    ) / dx**2
    d4 = (d2 @ d2).tocsr()
    eye = sp.identity(m, format="csr")
    stiff = (params.ei * d4 + params.k * eye).tocsr()
    damp = (params.c_d * d4 + params.mu * eye).tocsr()
    return {
        "d2": d2,
        "d4": d4,
        "stiff": stiff,
        "damp": damp,
        "stiff_lu": spla.splu(stiff.tocsc()),
    }


def _bump(params, act, xi):
    z = (np.asarray(xi, dtype=float) - act.r) / act.width
    out = np.zeros_like(z, dtype=float)
    mask = np.abs(z) < 1.0
    out[mask] = (1.0 + np.cos(np.pi * z[mask])) / (2.0 * act.width)
    return out


def beam_b(params, act):
    """Influence shape b(xi; r) sampled at the interior nodes.

    Nonnegative, supported in [r - width, r + width], unit mass up to
    quadrature error.
    """
    return _bump(params, act, params.nodes)


def beam_b_r(params, act):
    """d b / d r at the interior nodes (closed form)."""
    xi = params.nodes
    z = (xi - act.r) / act.width
    out = np.zeros_like(z)
    mask = np.abs(z) < 1.0
    out[mask] = (np.pi / (2.0 * act.width**2)) * np.sin(np.pi * z[mask])
    return out


def beam_F(params, x):
    """Nonlinearity F(w, v) = (0, -alpha w^3 / rho_a) on a stacked state."""
    x = np.asarray(x, dtype=float)
    m = params.n_cells - 1
    out = np.zeros_like(x)
    w = x[:m]
    out[m:] = (-params.alpha / params.rho_a) * w**3
    return out


def beam_F_jac(params, x):
    """Jacobian of beam_F at x as a sparse matrix (couples w into v-dot)."""
    m = params.n_cells - 1
    w = np.asarray(x, dtype=float)[:m]
    d = (-3.0 * params.alpha / params.rho_a) * w**2
    rows = m + np.arange(m)
    cols = np.arange(m)
    return sp.coo_matrix((d, (rows, cols)), shape=(2 * m, 2 * m)).tocsr()


def beam_adjoint_h(params, w_o, g):
    """Position part h of F'(x)*(f, g) from the 4th-order adjoint solve.

    Solves (EI D4 + k I) h = -3 alpha w_o^2 g with simply supported
    boundary conditions; realizes F'(x)*(f, g) = (h, 0) in the energy
    inner product.
    """
    w_o = np.asarray(w_o, dtype=float)
    g = np.asarray(g, dtype=float)
    rhs = (-3.0 * params.alpha) * w_o**2 * g
    return _matrices(params)["stiff_lu"].solve(rhs)


def greens_eval(params, xi, eta):
    """Closed-form simply supported Green's function (requires k = 0).

    Valid for the pure bending operator EI h'''' = delta(xi - eta); the
    foundation term destroys the cubic form, so k != 0 is rejected. The
    formula is symmetric by construction: it evaluates the single
    polynomial branch at (min, max) of the two arguments.
    """
    if params.k != 0.0:
        raise ValueError(
            "closed-form Green's function requires k = 0 "
            f"(got k = {params.k}); use beam_adjoint_h instead"
        )
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    ell = params.length
    x = np.minimum(xi, eta)
    y = np.maximum(xi, eta)
    val = ((2.0 * ell**2 * y - 3.0 * ell * y**2 + y**3) * x + (y - ell) * x**3) / (
        6.0 * ell * params.ei
    )
    return val


def greens_apply(params, f):
    """Deflection under load f by Green's-function quadrature (k = 0 only).

    Composite trapezoid on [0, L]: the boundary terms drop out because
    G(xi, 0) = G(xi, L) = 0, leaving a plain dx-weighted sum over the
    interior nodes.
    """
    nodes = params.nodes
    gmat = greens_eval(params, nodes[:, None], nodes[None, :])
    return params.dx * (gmat @ np.asarray(f, dtype=float))


def stiffness_solve(params, f):
    """Solve (EI D4 + k I) w = f on the interior nodes (simply supported)."""
    return _matrices(params)["stiff_lu"].solve(np.asarray(f, dtype=float))


def _cost_matrix(params, q1, q2):
    """Symmetric PSD matrix of the weighted energy quadratic form."""
    m = params.n_cells - 1
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    if q1.shape != (m,) or q2.shape != (m,):
        raise ValueError(
            f"beam cost fields must have shape ({m},) (interior nodes); "
            f"got q1 {q1.shape}, q2 {q2.shape}"
        )
    dx = params.dx
    d2 = _matrices(params)["d2"]
    mw = (dx * params.ei) * (d2.T @ sp.diags(q1) @ d2) + (dx * params.k) * sp.diags(q1)
    mv = (dx * params.rho_a) * sp.diags(q2)
    mat = sp.block_diag((mw, mv), format="csr")
    return ((mat + mat.T) * 0.5).tocsr()


def uniform_cost(params, r_weight=1.0):
    """CostSpec with q1 = q2 = 1: the running cost is the energy itself."""
    m = params.n_cells - 1
    return CostSpec(q1=np.ones(m), q2=np.ones(m), r_weight=r_weight)


def assemble_beam(params, act_width=0.05):
    """Build the beam Discretization.

    act_width fixes the actuator bump half-width used by b_of_r (the
    design variable is the center only).
    """
    mats = _matrices(params)
    m = params.n_cells - 1
    stiff = mats["stiff"]
    damp = mats["damp"]
    eye = sp.identity(m, format="csr")
    inv_rho = 1.0 / params.rho_a

    a_mat = sp.bmat(
        [[None, eye], [-inv_rho * stiff, -inv_rho * damp]], format="csr"
    )
    # Closed-form adjoint w.r.t. the energy Gram: A*(f,g) =
    # (-g, (EI D4 + k) f / rho_a - (c_d D4 + mu) g / rho_a).
    astar = sp.bmat(
        [[None, -eye], [inv_rho * stiff, -inv_rho * damp]], format="csr"
    )
    gram = _cost_matrix(params, np.ones(m), np.ones(m))

    nodes = params.nodes
    alpha = params.alpha

    def fnl(x):
        out = np.zeros_like(x)
        if alpha != 0.0:
            out[m:] = (-alpha * inv_rho) * x[:m] ** 3
        return out

    def fnl_diag(x):
        return (-3.0 * alpha * inv_rho) * x[:m] ** 2

    def b_of_r(r_arr):
        act = BeamActuator(float(r_arr[0]), act_width)
        vec = np.zeros(2 * m)
        vec[m:] = inv_rho * beam_b(params, act)
        return vec

    def b_jac_of_r(r_arr):
        act = BeamActuator(float(r_arr[0]), act_width)
        jac = np.zeros((2 * m, 1))
        jac[m:, 0] = inv_rho * beam_b_r(params, act)
        return jac

    def fstar_h(w_field, g):
        return beam_adjoint_h(params, w_field, g)

    def cost_matrix_fn(cost):
        return _cost_matrix(params, cost.q1, cost.q2)

    return Discretization(
        model="beam",
        params=params,
        n_space=m,
        a_mat=a_mat,
        gram=gram,
        astar_mat=astar,
        b_of_r=b_of_r,
        b_jac_of_r=b_jac_of_r,
        fnl=fnl,
        fnl_diag=fnl_diag,
        fstar_h=fstar_h,
        cost_matrix_fn=cost_matrix_fn,
        r_dim=1,
        meta={"dx": params.dx, "nodes": nodes, "act_width": act_width},
    )
