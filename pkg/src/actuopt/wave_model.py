"""Semi-linear wave equation on a rectangle with mixed boundary conditions.

Model on Omega = (0, Lx) x (0, Ly):

    w_tt = Lap w + F(w) + r(xi) u(t),
    w = 0 on the Dirichlet part Gamma0,  dw/dnu = 0 on the Neumann part
    Gamma1 (edge subsets of {left, right, bottom, top}; Gamma0 nonempty).

Spatial discretization: tensor grid, first differences at edge midpoints
for the gradient form. The stiffness matrix

    L = Dx^T Wx Dx + Dy^T Wy Dy

(with trapezoid cross-weights in W) restricted to the non-Dirichlet nodes
reproduces the 5-point Laplacian inside the domain and the ghost-node
mirror on Neumann edges, while staying exactly symmetric. With the lumped
trapezoid mass Mv the discrete Laplacian is -Mv^{-1} L and the first-order
system A(w, v) = (v, Lap_h w) is exactly skew-adjoint in the energy Gram
blockdiag(L, Mv) -- the H^1_{Gamma0} x L^2 form (seminorm plus the Gamma0
trace constraint).

Nonlinearity families: none, sine_gordon (F = sin), klein_gordon
(F = |w|^k w). The actuator is a radial raised-cosine bump of unit mass
with analytic center derivatives.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core_system import CostSpec, Discretization

_EDGES = ("bottom", "left", "right", "top")
_FAMILIES = ("none", "sine_gordon", "klein_gordon")


@dataclass(frozen=True)
class WaveParams:
    lx: float = 1.0
    ly: float = 1.0
    nx: int = 24
    ny: int = 24
    gamma1_edges: tuple = ()
    nonlinearity: str = "sine_gordon"
    kg_exponent: int = 2

    def __post_init__(self):
        if not (self.lx > 0.0 and self.ly > 0.0):
            raise ValueError("rectangle side lengths must be positive")
        if self.nx < 8 or self.ny < 8:
            raise ValueError(
                f"grid resolutions must be >= 8, got nx={self.nx}, ny={self.ny}"
            )
        edges = tuple(sorted(set(self.gamma1_edges)))
        for e in edges:
            if e not in _EDGES:
                raise ValueError(f"unknown edge name {e!r}; use one of {_EDGES}")
        if len(edges) == 4:
            raise ValueError(
                "all four edges are Neumann: the Dirichlet part must be nonempty"
            )
        object.__setattr__(self, "gamma1_edges", edges)
        if self.nonlinearity not in _FAMILIES:
            raise ValueError(
                f"unknown nonlinearity {self.nonlinearity!r}; use one of {_FAMILIES}"
            )
        if self.nonlinearity == "klein_gordon" and self.kg_exponent < 2:
            raise ValueError(
                f"klein_gordon exponent must be >= 2, got {self.kg_exponent}"
            )

    @property
    def hx(self):
        return self.lx / self.nx

    @property
    def hy(self):
        return self.ly / self.ny


@dataclass(frozen=True)
class WaveActuator:
    """Actuator design: bump center c = (c1, c2) and fixed radial half-width."""

    c1: float
    c2: float
    width: float = 0.1

    def __post_init__(self):
        if not (self.width > 0.0 and math.isfinite(self.width)):
            raise ValueError(f"actuator width must be positive, got {self.width}")


@dataclass(frozen=True)
class NonlinearityF:
    """Scalar family F with derivative F'; applied pointwise to w."""

    name: str
    f: Callable
    fprime: Callable


def nonlinearity_f(name, kg_exponent=2):
    if name == "none":
        return NonlinearityF("none", lambda z: np.zeros_like(z), lambda z: np.zeros_like(z))
    if name == "sine_gordon":
        return NonlinearityF("sine_gordon", np.sin, np.cos)
    if name == "klein_gordon":
        k = int(kg_exponent)
        if k < 2:
            raise ValueError(f"klein_gordon exponent must be >= 2, got {k}")

        def f(z):
            return np.abs(z) ** k * z

        def fprime(z):
            return (k + 1.0) * np.abs(z) ** k

        return NonlinearityF("klein_gordon", f, fprime)
    raise ValueError(f"unknown nonlinearity {name!r}; use one of {_FAMILIES}")


@functools.lru_cache(maxsize=16)
def _assembly(params: WaveParams):
    # flat node index = i + j*(nx+1): x varies fastest

    nx, ny = params.nx, params.ny
    hx, hy = params.hx, params.hy
    n_nodes = (nx + 1) * (ny + 1)

    ii = np.tile(np.arange(nx + 1), ny + 1)
    jj = np.repeat(np.arange(ny + 1), nx + 1)
    xcoord = ii * hx
    ycoord = jj * hy

    dirichlet = np.zeros(n_nodes, dtype=bool)
    gamma1 = set(params.gamma1_edges)
    if "left" not in gamma1:
        dirichlet |= ii == 0
    if "right" not in gamma1:
        dirichlet |= ii == nx
    if "bottom" not in gamma1:
        dirichlet |= jj == 0
    if "top" not in gamma1:
        dirichlet |= jj == ny
    free = ~dirichlet
    free_idx = np.flatnonzero(free)

    def flat(i, j):
        return i + j * (nx + 1)

    # x-direction edges: (i,j)->(i+1,j), i=0..nx-1, j=0..ny
    ei = np.tile(np.arange(nx), ny + 1)
    ej = np.repeat(np.arange(ny + 1), nx)
    xa = flat(ei, ej)
    xb = flat(ei + 1, ej)
    n_xe = xa.size
    rows = np.repeat(np.arange(n_xe), 2)
    cols = np.column_stack([xa, xb]).ravel()
    vals = np.tile([-1.0 / hx, 1.0 / hx], n_xe)
    dx_op = sp.coo_matrix((vals, (rows, cols)), shape=(n_xe, n_nodes)).tocsr()
    cy = np.where((ej == 0) | (ej == ny), 0.5, 1.0)
    wx = hx * hy * cy

    # y-direction edges: (i,j)->(i,j+1), i=0..nx, j=0..ny-1
    fi = np.tile(np.arange(nx + 1), ny)
    fj = np.repeat(np.arange(ny), nx + 1)
    ya = flat(fi, fj)
    yb = flat(fi, fj + 1)
    n_ye = ya.size
    rows = np.repeat(np.arange(n_ye), 2)
    cols = np.column_stack([ya, yb]).ravel()
    vals = np.tile([-1.0 / hy, 1.0 / hy], n_ye)
    dy_op = sp.coo_matrix((vals, (rows, cols)), shape=(n_ye, n_nodes)).tocsr()
    cx = np.where((fi == 0) | (fi == nx), 0.5, 1.0)
    wy = hx * hy * cx

    cx_node = np.where((ii == 0) | (ii == nx), 0.5, 1.0)
    cy_node = np.where((jj == 0) | (jj == ny), 0.5, 1.0)
    mv_full = hx * hy * cx_node * cy_node

    def stiffness(q1_full):
        qx = 0.5 * (q1_full[xa] + q1_full[xb])
        qy = 0.5 * (q1_full[ya] + q1_full[yb])
        l_full = dx_op.T @ sp.diags(wx * qx) @ dx_op + dy_op.T @ sp.diags(wy * qy) @ dy_op
        l_red = l_full.tocsr()[free_idx, :][:, free_idx]
        return ((l_red + l_red.T) * 0.5).tocsr()

    l_mat = stiffness(np.ones(n_nodes))
    return {
        "n_nodes": n_nodes,
        "xcoord": xcoord,
        "ycoord": ycoord,
        "dirichlet": dirichlet,
        "free_idx": free_idx,
        "stiffness": stiffness,
        "l_mat": l_mat,
        "l_lu": spla.splu(l_mat.tocsc()),
        "mv_full": mv_full,
        "mv_free": mv_full[free_idx],
    }


def _family(params):
    return nonlinearity_f(params.nonlinearity, params.kg_exponent)


def wave_F(params, x):
    """Nonlinearity (0, F(w)) on a stacked state over the free nodes."""
    x = np.asarray(x, dtype=float)
    m = x.size // 2
    out = np.zeros_like(x)
    out[m:] = _family(params).f(x[:m])
    return out


def wave_F_jac(params, x):
    """Jacobian of wave_F at x (diagonal coupling of w into v-dot)."""
    x = np.asarray(x, dtype=float)
    m = x.size // 2
    d = _family(params).fprime(x[:m])
    rows = m + np.arange(m)
    cols = np.arange(m)
    return sp.coo_matrix((d, (rows, cols)), shape=(2 * m, 2 * m)).tocsr()


def _bump_on(params, act, xp, yp):
    rho = np.hypot(xp - act.c1, yp - act.c2)
    cnorm = np.pi / (act.width**2 * (np.pi**2 - 4.0))
    out = np.zeros_like(rho)
    mask = rho < act.width
    out[mask] = cnorm * (1.0 + np.cos(np.pi * rho[mask] / act.width))
    return out


def wave_actuator(params, act):
    """Radial raised-cosine bump r(xi) sampled at the free nodes.

    Normalized so the continuous integral of r over the plane equals 1.
    """
    if not (
        act.c1 - act.width >= 0.0
        and act.c1 + act.width <= params.lx
        and act.c2 - act.width >= 0.0
        and act.c2 + act.width <= params.ly
    ):
        raise ValueError(
            f"actuator support disk (center ({act.c1}, {act.c2}), width "
            f"{act.width}) leaves the domain; project the center into the "
            "admissible box"
        )
    asm = _assembly(params)
    idx = asm["free_idx"]
    return _bump_on(params, act, asm["xcoord"][idx], asm["ycoord"][idx])


def wave_actuator_grad(params, act):
    """Analytic (dr/dc1, dr/dc2) at the free nodes."""
    asm = _assembly(params)
    idx = asm["free_idx"]
    xp = asm["xcoord"][idx]
    yp = asm["ycoord"][idx]
    d1 = xp - act.c1
    d2 = yp - act.c2
    rho = np.hypot(d1, d2)
    cnorm = np.pi / (act.width**2 * (np.pi**2 - 4.0))
    g1 = np.zeros_like(rho)
    g2 = np.zeros_like(rho)
    mask = (rho < act.width) & (rho > 0.0)
    coef = cnorm * (np.pi / act.width) * np.sin(np.pi * rho[mask] / act.width) / rho[mask]
    g1[mask] = coef * d1[mask]
    g2[mask] = coef * d2[mask]
    return g1, g2


def wave_adjoint_h(params, w_o, g):
    """Position part h of F'(x)*(f, g) from the elliptic adjoint solve.

    Solves Lap h = -F'(w_o) g with h = 0 on Gamma0 and dh/dnu = 0 on
    Gamma1 (discretely: L h = Mv F'(w_o) g on the free nodes); realizes
    F'(x)*(f, g) = (h, 0) in the energy inner product.
    """
    asm = _assembly(params)
    w_o = np.asarray(w_o, dtype=float)
    g = np.asarray(g, dtype=float)
    rhs = asm["mv_free"] * (_family(params).fprime(w_o) * g)
    return asm["l_lu"].solve(rhs)


def uniform_cost(params, r_weight=1.0):
    """CostSpec with q1 = q2 = 1 on the full node grid."""
    n_nodes = (params.nx + 1) * (params.ny + 1)
    return CostSpec(q1=np.ones(n_nodes), q2=np.ones(n_nodes), r_weight=r_weight)


def assemble_wave(params, act_width=0.1):
    """Build the wave Discretization (act_width fixes the bump radius)."""
    asm = _assembly(params)
    m = asm["free_idx"].size
    l_mat = asm["l_mat"]
    mv = asm["mv_free"]
    eye = sp.identity(m, format="csr")
    lap = (sp.diags(-1.0 / mv) @ l_mat).tocsr()

    a_mat = sp.bmat([[None, eye], [lap, None]], format="csr")
    astar = (-a_mat).tocsr()
    gram = sp.block_diag((l_mat, sp.diags(mv)), format="csr")

    fam = _family(params)
    n_nodes = asm["n_nodes"]

    def fnl(x):
        out = np.zeros_like(x)
        if fam.name != "none":
            out[m:] = fam.f(x[:m])
        return out

    def fnl_diag(x):
        return fam.fprime(x[:m])

    def b_of_r(c_arr):
        act = WaveActuator(float(c_arr[0]), float(c_arr[1]), act_width)
        vec = np.zeros(2 * m)
        vec[m:] = wave_actuator(params, act)
        return vec

    def b_jac_of_r(c_arr):
        act = WaveActuator(float(c_arr[0]), float(c_arr[1]), act_width)
        g1, g2 = wave_actuator_grad(params, act)
        jac = np.zeros((2 * m, 2))
        jac[m:, 0] = g1
        jac[m:, 1] = g2
        return jac

    def fstar_h(w_field, g):
        return wave_adjoint_h(params, w_field, g)

    def cost_matrix_fn(cost):
        if cost.q1.shape != (n_nodes,) or cost.q2.shape != (n_nodes,):
            raise ValueError(
                f"wave cost fields must have shape ({n_nodes},) (all grid "
                f"nodes); got q1 {cost.q1.shape}, q2 {cost.q2.shape}"
            )
        mw = asm["stiffness"](cost.q1)
        mv_block = sp.diags(mv * cost.q2[asm["free_idx"]])
        return sp.block_diag((mw, mv_block), format="csr")

    return Discretization(
        model="wave",
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
        r_dim=2,
        meta={
            "hx": params.hx,
            "hy": params.hy,
            "act_width": act_width,
            "free_idx": asm["free_idx"],
            "xcoord": asm["xcoord"],
            "ycoord": asm["ycoord"],
            "mv_full": asm["mv_full"],
            "n_nodes": n_nodes,
        },
    )
