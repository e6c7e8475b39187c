"""Pure-Neumann variational solves in both domain modes.

Bounded mode realizes the zero-mean-boundary-trace normalization with a rank-m
bordered (Lagrange) system: the multiplier absorbs exactly the quadrature
residual of the compatibility condition, so the discrete variational identity
holds against arbitrary test fields up to solver precision.  Graph mode
imposes homogeneous Dirichlet on the far (truncation) boundary and the natural
condition on the graph boundary.

The default linear path factorizes the bordered matrix once (sparse LU) and is
reused across many right-hand sides; Krylov paths (MINRES for symmetric
coefficients, GMRES otherwise, or projected Krylov without the border) are
available through SolveConfig.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coeff import adjoint_coefficients
from .discretize import (
    DiscreteField,
    assemble_boundary_load,
    assemble_stiffness,
    assemble_volume_load,
    boundary_weight_vector,
    constraint_rows,
)
from .errors import CompatibilityError, InterfaceError, NumericFailureError


@dataclass(frozen=True)
class SolveConfig:
    tolerance: float = 1e-10
    max_iterations: int = 20000
    constraint_method: str = "bordered-lagrange"  # or "projected-krylov"
    linear_solver: str = "direct"  # or "krylov"
    quadrature_order: int = 2
    far_boundary: str = "homogeneous-dirichlet"
    compatibility_rtol: float = 1e-6
    mollifier_subdiv: int = 3
    truncation_margin: float | None = None  # defaults to 4h at solve time

    def __post_init__(self):
        if not (0.0 < self.tolerance < 1.0):
            raise ValueError("tolerance must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.constraint_method not in ("bordered-lagrange", "projected-krylov"):
            raise ValueError(f"unknown constraint method {self.constraint_method}")
        if self.far_boundary != "homogeneous-dirichlet":
            raise ValueError(f"unsupported far-boundary condition {self.far_boundary}")


@dataclass
class SolveInfo:
    method: str
    iterations: int
    residual: float
    multiplier: np.ndarray | None = None
    residual_history: tuple = ()


class NeumannSolver:
    """Stiffness + constraint + factorization bundle, reusable across loads."""

    def __init__(self, mesh, fld, config=None):
        self.mesh = mesh
        self.field = fld
        self.config = config or SolveConfig()
        self.stiffness = assemble_stiffness(mesh, fld, self.config.quadrature_order)
        self.m = fld.m
        self.n_dof = self.stiffness.n_dof
        skew_norm = abs(self.stiffness.matrix - self.stiffness.matrix.T).max()
        scale = abs(self.stiffness.matrix).max()
        self.symmetric = skew_norm <= 1e-12 * max(scale, 1.0)
        self._lu = None
        self._graph_lu = None
        if not mesh.is_graph:
            self.constraint = constraint_rows(mesh, self.m)
            self.boundary_weights = boundary_weight_vector(mesh)
        else:
            self.constraint = None
            far = mesh.far_nodes
            mask = np.ones(self.n_dof, dtype=bool)
            for i in range(self.m):
                mask[far * self.m + i] = False
            self.free_dofs = np.flatnonzero(mask)

    # -- bounded mode --------------------------------------------------
    def _bordered(self):
        K = self.stiffness.matrix
        B = self.constraint
        return sp.bmat([[K, B.T], [B, None]], format="csc")

    def solve_bounded(self, load):
        """Solve the constrained system for a full load vector (n_dof,)."""
        if self.mesh.is_graph:
            raise InterfaceError("bounded solve requested on a graph mesh")
        cfg = self.config
        rhs = np.concatenate([load, np.zeros(self.m)])
        if cfg.constraint_method == "projected-krylov":
            u, mu, info = self._solve_projected(load)
        elif cfg.linear_solver == "direct":
            if self._lu is None:
                self._lu = spla.splu(self._bordered())
            x = self._lu.solve(rhs)
            u, mu = x[: self.n_dof], x[self.n_dof :]
            info = SolveInfo("bordered-direct", 1, 0.0, mu)
        else:
            u, mu, info = self._solve_bordered_krylov(rhs)
        res = self.stiffness.matrix @ u + self.constraint.T @ mu - load
        scale = max(np.linalg.norm(load), 1e-300)
        info.residual = float(np.linalg.norm(res) / scale)
        if info.residual > max(cfg.tolerance * 100, 1e-9):
            raise NumericFailureError(
                f"bounded solve residual {info.residual:.3e} above tolerance",
                diagnostics={"history": list(info.residual_history)},
            )
        info.multiplier = mu
        return u, info

    def _solve_bordered_krylov(self, rhs):
        cfg = self.config
        A = self._bordered()
        hist = []

        def cb(xk):
            hist.append(len(hist))

        if self.symmetric:
            x, code = spla.minres(A, rhs, rtol=cfg.tolerance, maxiter=cfg.max_iterations, callback=cb)
            method = "bordered-minres"
        else:
            x, code = spla.gmres(
                A, rhs, rtol=cfg.tolerance, atol=0.0, maxiter=cfg.max_iterations,
                restart=200, callback=cb, callback_type="x",
            )
            method = "bordered-gmres"
        if code != 0:
            raise NumericFailureError(
                f"{method} failed to converge (code {code})",
                diagnostics={"iterations": len(hist)},
            )
        return x[: self.n_dof], x[self.n_dof :], SolveInfo(method, len(hist), 0.0)

    def _solve_projected(self, load):
        """Krylov on P K P restricted to the constraint null space."""
        cfg = self.config
        B = self.constraint.toarray()
        bnorm2 = (B * B).sum(axis=1)

        def project(v):
            w = np.asarray(v, dtype=float).copy()
            for i in range(self.m):
                w -= B[i] * (B[i] @ w) / bnorm2[i]
            return w

        K = self.stiffness.matrix
        op = spla.LinearOperator(
            (self.n_dof, self.n_dof), matvec=lambda v: project(K @ project(v)), dtype=float
        )
        rhs = project(load)
        hist = []

        def cb(xk):
            hist.append(len(hist))

        if self.symmetric:
            x, code = spla.cg(op, rhs, rtol=cfg.tolerance, atol=0.0, maxiter=cfg.max_iterations, callback=cb)
        else:
            x, code = spla.gmres(
                op, rhs, rtol=cfg.tolerance, atol=0.0, maxiter=cfg.max_iterations,
                restart=200, callback=cb, callback_type="x",
            )
        if code != 0:
            raise NumericFailureError(
                f"projected Krylov failed to converge (code {code})",
                diagnostics={"iterations": len(hist)},
            )
        u = project(x)
        # multipliers: component of the residual along the (orthogonal) constraint rows
        r = load - K @ u
        mu = np.array([(B[i] @ r) / bnorm2[i] for i in range(self.m)])
        return u, mu, SolveInfo("projected-krylov", len(hist), 0.0)

    # -- graph mode ----------------------------------------------------
    def solve_graph(self, load):
        if not self.mesh.is_graph:
            raise InterfaceError("graph solve requested on a bounded mesh")
        cfg = self.config
        free = self.free_dofs
        K = self.stiffness.matrix
        Krr = K[free][:, free].tocsc()
        rhs = load[free]
        if cfg.linear_solver == "direct":
            if self._graph_lu is None:
                self._graph_lu = spla.splu(Krr)
            ur = self._graph_lu.solve(rhs)
            info = SolveInfo("graph-direct", 1, 0.0)
        else:
            hist = []

            def cb(xk):
                hist.append(len(hist))

            if self.symmetric:
                ur, code = spla.cg(Krr, rhs, rtol=cfg.tolerance, atol=0.0, maxiter=cfg.max_iterations, callback=cb)
            else:
                ur, code = spla.gmres(
                    Krr, rhs, rtol=cfg.tolerance, atol=0.0, maxiter=cfg.max_iterations,
                    restart=200, callback=cb, callback_type="x",
                )
            if code != 0:
                raise NumericFailureError(
                    f"graph Krylov failed to converge (code {code})",
                    diagnostics={"iterations": len(hist)},
                )
            info = SolveInfo("graph-krylov", len(hist), 0.0)
        u = np.zeros(self.n_dof)
        u[free] = ur
        scale = max(np.linalg.norm(rhs), 1e-300)
        info.residual = float(np.linalg.norm(Krr @ ur - rhs) / scale)
        if info.residual > max(cfg.tolerance * 100, 1e-9):
            raise NumericFailureError(f"graph solve residual {info.residual:.3e} above tolerance")
        return u, info


def check_compatibility(mesh, f, g, m=1, quadrature_order=2):
    """r = int_Omega f + int_{dOmega} g per component (pure evaluation)."""
    fl = assemble_volume_load(mesh, f, m, quadrature_order)
    gl = assemble_boundary_load(mesh, g, m, quadrature_order, graph_only=False)
    return (fl + gl).reshape(-1, m).sum(axis=0)


def _l1_data_norm(mesh, f, g, m, order):
    fl = assemble_volume_load(mesh, lambda p: np.abs(_eval(f, p, m)), m, order) if f else np.zeros(1)
    gl = (
        assemble_boundary_load(mesh, lambda p: np.abs(_eval(g, p, m)), m, order, graph_only=False)
        if g
        else np.zeros(1)
    )
    return float(fl.sum() + gl.sum())


def _eval(fn, pts, m):
    out = np.asarray(fn(pts), dtype=float)
    if out.ndim == 1:
        out = out[:, None]
    return out


def solve_neumann_bounded(mesh, fld, f, g, config=None, solver=None):
    """Unique zero-boundary-mean solution of L u = f, A Du . n = g.

    Raises CompatibilityError when int f + int g deviates from zero by more
    than compatibility_rtol relative to the L1 size of the data.
    """
    cfg = config or SolveConfig()
    solver = solver or NeumannSolver(mesh, fld, cfg)
    m = fld.m
    residual = check_compatibility(mesh, f, g, m, cfg.quadrature_order)
    scale = _l1_data_norm(mesh, f, g, m, cfg.quadrature_order)
    if np.linalg.norm(residual) > cfg.compatibility_rtol * max(scale, 1e-300):
        raise CompatibilityError(residual)
    load = assemble_volume_load(mesh, f, m, cfg.quadrature_order) + assemble_boundary_load(
        mesh, g, m, cfg.quadrature_order, graph_only=False
    )
    u, info = solver.solve_bounded(load)
    out = DiscreteField(mesh, u.reshape(-1, m))
    out.info = info
    return out


def solve_neumann_graph(mesh, fld, f, config=None, solver=None):
    """Y^{1,2}-type solve: natural condition on the graph boundary, zero on the far cut.

    A support too close to the far boundary sets a truncation-warning flag.
    """
    cfg = config or SolveConfig()
    solver = solver or NeumannSolver(mesh, fld, cfg)
    m = fld.m
    load = assemble_volume_load(mesh, f, m, cfg.quadrature_order)
    flags = _truncation_flags(mesh, load, m, cfg)
    u, info = solver.solve_graph(load)
    out = DiscreteField(mesh, u.reshape(-1, m), flags=flags)
    out.info = info
    return out


def _truncation_flags(mesh, load, m, cfg):
    margin = cfg.truncation_margin if cfg.truncation_margin is not None else 4 * mesh.h
    support = np.flatnonzero(np.abs(load.reshape(-1, m)).sum(axis=1) > 0)
    if len(support) == 0 or mesh.far_nodes is None or len(mesh.far_nodes) == 0:
        return ()
    pts = mesh.nodes[support]
    far_lo = mesh.facet_lo[~mesh.graph_facets]
    far_hi = mesh.facet_hi[~mesh.graph_facets]
    d = np.maximum(far_lo[None] - pts[:, None], 0.0) + np.maximum(pts[:, None] - far_hi[None], 0.0)
    dist = np.sqrt((d**2).sum(axis=2)).min()
    if dist < margin:
        return (f"truncation-warning: load support within {dist:.3g} of the far boundary",)
    return ()


def adjoint_solver(solver):
    """Solver for the adjoint operator on the same mesh/config."""
    return NeumannSolver(solver.mesh, adjoint_coefficients(solver.field), solver.config)
