"""Mollified Neumann kernels: construction, defining identities, duality.

A kernel at pole y is the m x m matrix of columns solving

    L v = Phi_eps e_k   with  A Dv . n = -(1/|dOmega|) e_k   (bounded mode)
    L v = Phi_eps e_k   with  A Dv . n = 0 on the graph part (graph mode)

where Phi_eps is a radial C^1 bump of mass one.  The discrete load of
Phi_eps is rescaled to unit mass under the assembly quadrature, so the
compatibility of the pair (Phi_eps e_k, -(1/|dOmega|) e_k) is exact at the
matrix level and the variational identities below hold to solver precision.
The epsilon -> 0 limit is realized at mesh scale (eps = eps_factor * h,
default 2h) together with an eps-consistency check; nothing below the mesh
scale is resolvable.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .coeff import adjoint_coefficients
from .discretize import (
    DiscreteField,
    boundary_weight_vector,
    gauss_rule_1d,
    interpolate,
    shape_values,
)
from .errors import (
    CoverageError,
    InterfaceError,
    InvalidGeometryError,
    UnderResolvedError,
)
from .mesh import distance_to_boundary
from .solve import NeumannSolver, SolveConfig

#: normalization of the quartic bump (1 - |z|^2)^2 on the unit ball in d = 3:
#: 4 pi int_0^1 (1 - r^2)^2 r^2 dr = 32 pi / 105
MOLLIFIER_NORMALIZATION = 105.0 / (32.0 * np.pi)


@dataclass(frozen=True)
class Mollifier:
    """Radial bump Phi_eps(x) = c eps^-3 (1 - |x-y|^2/eps^2)_+^2 of unit mass."""

    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("mollifier radius must be positive")

    @property
    def normalization(self):
        return MOLLIFIER_NORMALIZATION

    @property
    def profile_sup(self):
        """sup of the unscaled profile c (1 - |z|^2)_+^2, attained at z = 0."""
        return MOLLIFIER_NORMALIZATION

    def __call__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        z2 = ((pts - np.asarray(self.center)) ** 2).sum(axis=1) / self.radius**2
        vals = np.where(z2 < 1.0, (1.0 - np.minimum(z2, 1.0)) ** 2, 0.0)
        return MOLLIFIER_NORMALIZATION * vals / self.radius**3


def mollifier_eval(mollifier, x):
    """Density value(s) of Phi_eps at x."""
    out = mollifier(x)
    return float(out[0]) if np.asarray(x).ndim == 1 else out


def integrate_mollifier(mollifier, subdivisions=64, order=2):
    """Refined Gauss quadrature of Phi_eps over its support (mesh-independent)."""
    eps = mollifier.radius
    x, w = gauss_rule_1d(order)
    edges = np.linspace(-eps, eps, subdivisions + 1)
    h = edges[1] - edges[0]
    pts1 = (edges[:-1, None] + h * x[None, :]).ravel()
    wts1 = np.tile(h * w, subdivisions)
    X, Y, Z = np.meshgrid(pts1, pts1, pts1, indexing="ij")
    W = np.einsum("i,j,k->ijk", wts1, wts1, wts1)
    pts = np.stack([X, Y, Z], axis=-1).reshape(-1, 3) + np.asarray(mollifier.center)
    return float((mollifier(pts) * W.ravel()).sum())


def mollifier_load(mesh, mollifier, subdiv=3, order=2, normalize=True):
    """Scalar nodal load l_p = int_Omega Phi_eps psi_p, per-cell subdivided Gauss.

    With ``normalize`` the vector is rescaled so sum_p l_p = 1 exactly: the
    discrete mass of the mollified delta is then exactly one, which transfers
    the continuum compatibility identity to the matrix level.
    """
    eps = mollifier.radius
    center = np.asarray(mollifier.center)
    lo = center - eps
    hi = center + eps
    cell_lo = mesh.cell_origins()
    sel = np.flatnonzero(
        np.all(cell_lo < hi + 1e-12, axis=1) & np.all(cell_lo + mesh.h > lo - 1e-12, axis=1)
    )
    if len(sel) == 0:
        raise InvalidGeometryError("mollifier support misses the mesh")
    x, w = gauss_rule_1d(order)
    sub = (np.arange(subdiv)[:, None] + x[None, :]).ravel() / subdiv  # unit-cell coords
    wsub = np.tile(w / subdiv, subdiv)
    P = np.stack(np.meshgrid(sub, sub, sub, indexing="ij"), axis=-1).reshape(-1, 3)
    W = np.einsum("i,j,k->ijk", wsub, wsub, wsub).ravel() * mesh.h**3
    psi = shape_values(P)  # (G, 8)
    load = np.zeros(mesh.n_nodes)
    pts = cell_lo[sel][:, None, :] + mesh.h * P[None, :, :]
    vals = mollifier(pts.reshape(-1, 3)).reshape(len(sel), -1)
    contrib = np.einsum("g,cg,gp->cp", W, vals, psi)
    np.add.at(load, mesh.cells[sel].ravel(), contrib.ravel())
    raw_mass = float(load.sum())
    if normalize:
        if raw_mass <= 0:
            raise InvalidGeometryError("mollifier has zero discrete mass")
        load /= raw_mass
    return load, raw_mass


@dataclass
class NeumannKernel:
    """All m columns of the mollified kernel at one pole.

    ``values[p, j, k]`` is component j of column k at node p; ``pole_load``
    is the shared scalar mollifier load (the discrete averaging functional
    realizing point evaluation at the pole).
    """

    mesh: object
    pole: np.ndarray
    eps: float
    values: np.ndarray  # (n_nodes, m, m)
    pole_load: np.ndarray  # (n_nodes,)
    adjoint: bool
    solver: NeumannSolver
    telemetry: dict

    @property
    def m(self):
        return self.values.shape[1]

    @property
    def mode(self):
        return "graph" if self.mesh.is_graph else "bounded"

    def column(self, k):
        return DiscreteField(self.mesh, self.values[:, :, k])

    def value_at(self, points, readout="interpolate"):
        """Kernel matrix N(x, y) at probe x: (m, m) or (n, m, m)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if readout == "nearest":
            d = ((self.mesh.nodes[None] - pts[:, None]) ** 2).sum(axis=2)
            out = self.values[np.argmin(d, axis=1)]
        else:
            flat = interpolate(
                DiscreteField(self.mesh, self.values.reshape(self.mesh.n_nodes, -1)), pts
            )
            out = flat.reshape(len(pts), self.m, self.m)
        return out[0] if np.asarray(points).ndim == 1 else out

    def magnitude_at(self, points, readout="interpolate"):
        """Frobenius |N(x, y)| over the (m, m) entries."""
        v = self.value_at(points, readout)
        return float(np.linalg.norm(v)) if v.ndim == 2 else np.linalg.norm(v, axis=(1, 2))


def build_mollified_column(mesh, fld, y, eps, k, config=None, solver=None):
    """One column of the mollified kernel: L v = Phi_eps e_k with the compensating flux."""
    cfg = config or SolveConfig()
    _check_pole(mesh, y, eps, require_interior=True)
    solver = solver or NeumannSolver(mesh, fld, cfg)
    load, _ = mollifier_load(mesh, Mollifier(tuple(y), eps), cfg.mollifier_subdiv, cfg.quadrature_order)
    u, info = _column_solve(mesh, solver, load, k)
    out = DiscreteField(mesh, u.reshape(-1, fld.m))
    out.info = info
    return out


def _check_pole(mesh, y, eps, require_interior, min_depth=None):
    if eps < 2 * mesh.h - 1e-12:
        raise UnderResolvedError(f"mollifier radius {eps} below 2h = {2 * mesh.h}")
    if require_interior:
        d = distance_to_boundary(mesh, y)  # raises OutOfDomainError when outside
        if d < eps - 1e-12:
            raise InvalidGeometryError(
                f"mollifier ball of radius {eps} at {tuple(y)} is not contained in the domain"
            )
        if min_depth is not None and d < min_depth - 1e-12:
            raise InvalidGeometryError(
                f"pole depth {d:.4g} below the required {min_depth:.4g}"
            )


def _column_solve(mesh, solver, pole_load, k):
    m = solver.m
    load = np.zeros(solver.n_dof)
    load[k::m] = pole_load
    if mesh.is_graph:
        return solver.solve_graph(load)
    # flux -(1/|dOmega|) e_k; the exact trace weights make the data exactly compatible
    b = solver.boundary_weights
    load[k::m] -= b / mesh.boundary_measure
    return solver.solve_bounded(load)


def build_kernel(
    mesh,
    fld,
    y,
    config=None,
    eps=None,
    adjoint=False,
    solver=None,
    require_interior=True,
    threads=1,
):
    """All m columns at pole y; adjoint=True builds the kernel of the adjoint operator.

    ``eps`` defaults to 2h, the finest resolvable mollification scale.  With
    ``require_interior=False`` the mollifier may be clipped by the boundary
    (its discrete mass is renormalized), which is what the full-node kernel
    sets of the representation identity use.
    """
    cfg = config or SolveConfig()
    y = np.asarray(y, dtype=float)
    eps = 2 * mesh.h if eps is None else float(eps)
    _check_pole(mesh, y, eps, require_interior, min_depth=max(4 * mesh.h, eps))
    work_field = adjoint_coefficients(fld) if adjoint else fld
    solver = solver or NeumannSolver(mesh, work_field, cfg)
    if solver.field is not work_field and solver.field.spec != work_field.spec:
        raise InterfaceError("solver was built for a different coefficient field")
    pole_load, raw_mass = mollifier_load(
        mesh, Mollifier(tuple(y), eps), cfg.mollifier_subdiv, cfg.quadrature_order
    )
    m = fld.m
    values = np.empty((mesh.n_nodes, m, m))
    telemetry = {"raw_mass": raw_mass, "columns": []}

    def run(k):
        return _column_solve(mesh, solver, pole_load, k)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(m)))
    else:
        results = [run(k) for k in range(m)]
    for k, (u, info) in enumerate(results):
        values[:, :, k] = u.reshape(-1, m)
        telemetry["columns"].append(
            {"k": k, "method": info.method, "iterations": info.iterations, "residual": info.residual}
        )
    return NeumannKernel(mesh, y, eps, values, pole_load, adjoint, solver, telemetry)


def check_defining_identity(kernel, phi):
    """Residual of the discrete variational identity, one entry per column.

    Bounded: B(col_k, phi) + (1/|dOmega|) int_{dOmega} phi^k - (Phi_eps * phi^k)(y).
    Graph:   B(col_k, phi) - (Phi_eps * phi^k)(y); phi must vanish on the far cut.
    """
    mesh = kernel.mesh
    if phi.mesh is not mesh:
        raise InterfaceError("test field lives on a different mesh")
    m = kernel.m
    K = kernel.solver.stiffness.matrix
    phi_flat = phi.values.reshape(-1)
    if mesh.is_graph:
        if np.abs(phi.values[mesh.far_nodes]).max() > 1e-14:
            raise InterfaceError("graph-mode test fields must vanish on the far boundary")
        boundary_term = np.zeros(m)
    else:
        b = boundary_weight_vector(mesh)
        boundary_term = (b @ phi.values) / mesh.boundary_measure
    res = np.empty(m)
    for k in range(m):
        col = kernel.values[:, :, k].reshape(-1)
        mollified = kernel.pole_load @ phi.values[:, k]
        res[k] = phi_flat @ (K @ col) + boundary_term[k] - mollified
    return res


def check_symmetry_identity(kernel_fwd, kernel_adj):
    """Defect of the mollified-pairing symmetry identity.

    max over (l, k) of |<Phi_eps'(.; x), N_eps_{lk}(., y)> - <Phi_eps(.; y),
    Nt_eps'_{kl}(., x)>| for the forward kernel at y and the adjoint kernel at
    x.  Exact at the discrete level because the two stiffness operators are
    transposes.
    """
    if kernel_fwd.mesh is not kernel_adj.mesh:
        raise InterfaceError("kernels live on different meshes")
    if abs(kernel_fwd.eps - kernel_adj.eps) > 1e-14:
        raise InterfaceError("symmetry pairing requires matching mollification radii")
    if kernel_fwd.adjoint == kernel_adj.adjoint:
        raise InterfaceError("need one forward and one adjoint kernel")
    m = kernel_fwd.m
    defect = 0.0
    for l in range(m):
        for k in range(m):
            lhs = kernel_adj.pole_load @ kernel_fwd.values[:, l, k]
            rhs = kernel_fwd.pole_load @ kernel_adj.values[:, k, l]
            defect = max(defect, abs(lhs - rhs))
    return defect


def build_node_kernel_set(mesh, fld, config=None, eps=None, adjoint=True, threads=1,
                          max_nodes=3500):
    """Adjoint kernels at every mesh node (the discrete Green-matrix transpose).

    One factorization serves all poles; boundary poles use clipped,
    renormalized mollifiers.  Dense full-set storage grows like n_nodes^2, so
    meshes beyond ~14^3 are refused unless ``max_nodes`` is raised explicitly.
    """
    cfg = config or SolveConfig()
    if mesh.n_nodes > max_nodes:
        raise CoverageError(
            f"full kernel set on {mesh.n_nodes} nodes exceeds max_nodes={max_nodes}; "
            "representation tests are meant for coarse meshes"
        )
    work_field = adjoint_coefficients(fld) if adjoint else fld
    solver = NeumannSolver(mesh, work_field, cfg)
    kernels = {}

    def build(p):
        return build_kernel(
            mesh, fld, mesh.nodes[p], cfg, eps=eps, adjoint=adjoint,
            solver=solver, require_interior=False,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(build, range(mesh.n_nodes)))
        for p, kern in enumerate(results):
            kernels[p] = kern
    else:
        for p in range(mesh.n_nodes):
            kernels[p] = build(p)
    return kernels


def representation_solve(kernels, f, g, quadrature_order=2):
    """Evaluate u(x) = int N(x, y) f(y) dy + int_dOmega N(x, y) g(y) dsigma(y).

    ``kernels`` maps node id -> adjoint kernel at that node.  By discrete
    duality the result equals the mollified readout of the direct solve (same
    discretization, same eps) to solver precision.
    """
    from .discretize import assemble_boundary_load, assemble_volume_load

    if not kernels:
        raise CoverageError("empty kernel set")
    sample = next(iter(kernels.values()))
    mesh = sample.mesh
    if not sample.adjoint:
        raise InterfaceError("representation pairing requires adjoint kernels")
    missing = [p for p in range(mesh.n_nodes) if p not in kernels]
    if missing:
        raise CoverageError(f"kernel set misses {len(missing)} node poles (first: {missing[:4]})")
    m = sample.m
    load = assemble_volume_load(mesh, f, m, quadrature_order)
    if not mesh.is_graph:
        load = load + assemble_boundary_load(mesh, g, m, quadrature_order, graph_only=False)
    elif g is not None:
        raise InterfaceError("graph-mode representation takes no boundary density")
    out = np.empty((mesh.n_nodes, m))
    for p in range(mesh.n_nodes):
        kern = kernels[p]
        for l in range(m):
            # <F, l-th adjoint column at pole x_p> = (Phi_eps * u^l)(x_p)
            out[p, l] = load @ kern.values[:, :, l].reshape(-1)
    return DiscreteField(mesh, out)


def export_kernel_slice(kernel, path, component=(0, 0)):
    """(x, value) table of one (j, k) kernel entry over all nodes."""
    j, k = component
    with open(path, "w") as fh:
        fh.write(
            f"# kernel slice pole={tuple(float(v) for v in kernel.pole)} "
            f"eps={kernel.eps!r} component=({j},{k})\n"
        )
        fh.write("x,y,z,value\n")
        for xyz, v in zip(kernel.mesh.nodes, kernel.values[:, j, k]):
            fh.write(f"{xyz[0]!r},{xyz[1]!r},{xyz[2]!r},{v!r}\n")


def mollified_readout(kernels, u):
    """Apply each pole's averaging functional to u: the eps-consistent point values."""
    sample = next(iter(kernels.values()))
    mesh = sample.mesh
    if u.mesh is not mesh:
        raise InterfaceError("field lives on a different mesh")
    out = np.empty((mesh.n_nodes, u.m))
    for p in range(mesh.n_nodes):
        out[p] = kernels[p].pole_load @ u.values
    return DiscreteField(mesh, out)
