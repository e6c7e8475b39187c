"""Trilinear hexahedral FE assembly on uniform lattice meshes.

Degrees of freedom are node-major: dof(p, i) = p * m + i for node p and
component i.  The bilinear form entry ((p,i),(q,j)) is
``int_Omega A[a,b,i,j] D_b psi_q D_a psi_p`` under tensor Gauss quadrature;
coefficients are sampled per quadrature point, so piecewise-constant fields
are integrated exactly.  The mean-boundary-trace functional b (b_p =
int_{dOmega} psi_p) doubles as the constraint row realizing the zero-trace
normalization and as the boundary-mean evaluator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericFailureError, UnsupportedError
from .mesh import CELL_CORNERS, Mesh

_GAUSS = {
    1: (np.array([0.5]), np.array([1.0])),
    2: (np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]), np.array([0.5, 0.5])),
    3: (
        np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)]),
        np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0]),
    ),
}


def gauss_rule_1d(order):
    if order in _GAUSS:
        return _GAUSS[order]
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def shape_values(t):
    """Trilinear shape functions on the unit cell at points t (n, 3) -> (n, 8)."""
    t = np.atleast_2d(t)
    c = CELL_CORNERS[None, :, :]  # (1, 8, 3)
    u = t[:, None, :]
    return np.prod(np.where(c == 1, u, 1.0 - u), axis=2)


def shape_gradients(t):
    """Reference gradients at points t (n, 3) -> (n, 8, 3) (unit cell, no h scaling)."""
    t = np.atleast_2d(t)
    c = CELL_CORNERS[None, :, :]
    u = t[:, None, :]
    f = np.where(c == 1, u, 1.0 - u)  # (n, 8, 3)
    df = np.where(c == 1, 1.0, -1.0)
    grads = np.empty(f.shape)
    for a in range(3):
        others = [b for b in range(3) if b != a]
        grads[:, :, a] = df[:, :, a] * f[:, :, others[0]] * f[:, :, others[1]]
    return grads


def volume_quadrature(order):
    """Tensor rule on the unit cell: points (G, 3), weights (G,)."""
    x, w = gauss_rule_1d(order)
    pts = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    wts = np.prod(np.stack(np.meshgrid(w, w, w, indexing="ij"), axis=-1).reshape(-1, 3), axis=1)
    return pts, wts


def quadrature_points(mesh, order=2):
    """Physical Gauss points (C, G, 3) and weights (G,) scaled by h^3."""
    ref, w = volume_quadrature(order)
    pts = mesh.cell_origins()[:, None, :] + mesh.h * ref[None, :, :]
    return pts, w * mesh.h**3


@dataclass
class DiscreteField:
    """Nodal vector-valued function: values (n_nodes, m)."""

    mesh: Mesh
    values: np.ndarray
    flags: tuple = ()

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        assert self.values.shape[0] == self.mesh.n_nodes
        assert np.all(np.isfinite(self.values)), "discrete fields must be finite"

    @property
    def m(self):
        return self.values.shape[1]

    def component(self, i):
        return self.values[:, i]

    def __add__(self, other):
        return DiscreteField(self.mesh, self.values + other.values)

    def __sub__(self, other):
        return DiscreteField(self.mesh, self.values - other.values)

    def __mul__(self, scalar):
        return DiscreteField(self.mesh, self.values * float(scalar))

    __rmul__ = __mul__


@dataclass
class StiffnessOperator:
    """Assembled bilinear form with its mesh/field provenance."""

    matrix: sp.csr_matrix
    mesh: Mesh
    m: int
    quadrature_order: int

    def apply(self, vec):
        return self.matrix @ vec

    @property
    def n_dof(self):
        return self.matrix.shape[0]


def _cell_dofs(mesh, m):
    return (mesh.cells[:, :, None] * m + np.arange(m)[None, None, :]).reshape(mesh.n_cells, 8 * m)


def assemble_stiffness(mesh, fld, quadrature_order=2, chunk=120_000):
    """Cell-chunked assembly keeps peak memory bounded on large meshes.

    Chunks accumulate into one CSR sum in a fixed order, so the result is
    bit-identical regardless of mesh size.
    """
    ref, w = volume_quadrature(quadrature_order)
    grads = shape_gradients(ref) / mesh.h  # (G, 8, 3) physical
    wphys = w * mesh.h**3
    m = fld.m
    dofs = _cell_dofs(mesh, m)
    n = mesh.n_nodes * m
    origins = mesh.cell_origins()
    mat = sp.csr_matrix((n, n))
    for start in range(0, mesh.n_cells, chunk):
        sel = slice(start, min(start + chunk, mesh.n_cells))
        nc = sel.stop - sel.start
        pts = origins[sel][:, None, :] + mesh.h * ref[None, :, :]
        a = fld.evaluate(pts.reshape(-1, 3)).reshape(nc, len(ref), 3, 3, m, m)
        # entry ((p,i),(q,j)) = sum_g w_g A[a,b,i,j] dpsi_q[b] dpsi_p[a]
        kcell = np.einsum("g,cgabij,gqb,gpa->cpiqj", wphys, a, grads, grads, optimize=True)
        rows = np.repeat(dofs[sel], 8 * m, axis=1).ravel()
        cols = np.tile(dofs[sel], (1, 8 * m)).ravel()
        mat = mat + sp.coo_matrix(
            (kcell.reshape(nc, 8 * m, 8 * m).ravel(), (rows, cols)), shape=(n, n)
        ).tocsr()
    return StiffnessOperator(mat, mesh, m, quadrature_order)


def assemble_mass(mesh, m=1, quadrature_order=2):
    ref, w = volume_quadrature(quadrature_order)
    psi = shape_values(ref)  # (G, 8)
    mcell = np.einsum("g,gp,gq->pq", w * mesh.h**3, psi, psi)
    dofs = _cell_dofs(mesh, m)
    n = mesh.n_nodes * m
    vals = np.zeros((mesh.n_cells, 8 * m, 8 * m))
    for i in range(m):
        vals[:, i::m, i::m] = mcell[None, :, :]
    rows = np.repeat(dofs, 8 * m, axis=1).ravel()
    cols = np.tile(dofs, (1, 8 * m)).ravel()
    return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _as_components(vals, m, n):
    vals = np.asarray(vals, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape != (n, m):
        raise ValueError(f"density returned shape {vals.shape}, expected {(n, m)}")
    return vals


def assemble_volume_load(mesh, f, m, quadrature_order=2):
    """Load entries (p, i) = int_Omega f^i psi_p."""
    out = np.zeros(mesh.n_nodes * m)
    if f is None:
        return out
    ref, w = volume_quadrature(quadrature_order)
    psi = shape_values(ref)
    pts = mesh.cell_origins()[:, None, :] + mesh.h * ref[None, :, :]
    fv = _as_components(f(pts.reshape(-1, 3)), m, mesh.n_cells * len(ref))
    fv = fv.reshape(mesh.n_cells, len(ref), m)
    lcell = np.einsum("g,cgi,gp->cpi", w * mesh.h**3, fv, psi)
    np.add.at(out, _cell_dofs(mesh, m).reshape(-1), lcell.reshape(-1))
    return out


def facet_quadrature(mesh, order=2):
    """Gauss points on each boundary facet: (F, Gf, 3), trace values (Gf, 4), weights (Gf,)."""
    x, w = gauss_rule_1d(order)
    s, t = np.meshgrid(x, x, indexing="ij")
    s, t = s.ravel(), t.ravel()
    w2 = np.outer(w, w).ravel() * mesh.h**2
    # bilinear trace on the 4 facet nodes (ordering from CELL_FACES corner lists)
    trace = np.stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t], axis=1)
    lo = mesh.facet_lo
    hi = mesh.facet_hi
    span = hi - lo  # one axis has zero span
    axes = np.argmax(mesh.facet_normal != 0, axis=1)
    pts = np.empty((len(lo), len(s), 3))
    for fidx in range(len(lo)):
        a = axes[fidx]
        t1, t2 = [b for b in range(3) if b != a]
        pts[fidx, :, a] = lo[fidx, a]
        pts[fidx, :, t1] = lo[fidx, t1] + span[fidx, t1] * s
        pts[fidx, :, t2] = lo[fidx, t2] + span[fidx, t2] * t
    return pts, trace, w2


def _facet_trace_map(mesh):
    """Map facet-local quadrature corners to the stored facet node order."""
    # facet_nodes store 4 node ids; reconstruct their (s, t) corner ordering
    lo = mesh.facet_lo
    axes = np.argmax(mesh.facet_normal != 0, axis=1)
    orderings = np.empty((len(lo), 4), dtype=np.int64)
    fverts = mesh.nodes[mesh.facet_nodes]  # (F, 4, 3)
    for fidx in range(len(lo)):
        a = axes[fidx]
        t1, t2 = [b for b in range(3) if b != a]
        s = (fverts[fidx, :, t1] - lo[fidx, t1]) / mesh.h
        t = (fverts[fidx, :, t2] - lo[fidx, t2]) / mesh.h
        code = (np.round(s) + 2 * np.round(t)).astype(np.int64)  # 0:(0,0) 1:(1,0) 2:(0,1) 3:(1,1)
        orderings[fidx] = np.argsort(code)
    return orderings


def assemble_boundary_load(mesh, g, m, quadrature_order=2, graph_only=None):
    """Load entries (p, i) = int_{dOmega} g^i psi_p over boundary facets.

    For graph meshes only graph facets carry data by default (the far
    boundary is artificial).
    """
    out = np.zeros(mesh.n_nodes * m)
    if g is None:
        return out
    if graph_only is None:
        graph_only = mesh.is_graph
    sel = np.arange(len(mesh.facet_cell))
    if graph_only:
        if mesh.graph_facets is None:
            raise UnsupportedError("graph_only load on a bounded mesh")
        sel = np.flatnonzero(mesh.graph_facets)
    pts, trace, w2 = facet_quadrature(mesh, quadrature_order)
    order_map = _facet_trace_map(mesh)
    gv = _as_components(g(pts[sel].reshape(-1, 3)), m, len(sel) * trace.shape[0])
    gv = gv.reshape(len(sel), trace.shape[0], m)
    contrib = np.einsum("g,fgi,gc->fci", w2, gv, trace)  # (F, 4 corners in (s,t) order, m)
    for row, fidx in enumerate(sel):
        nodes = mesh.facet_nodes[fidx][order_map[fidx]]
        for c, p in enumerate(nodes):
            out[p * m : p * m + m] += contrib[row, c]
    return out


def boundary_weight_vector(mesh):
    """b_p = int_{dOmega} psi_p: exact (area / 4 per adjacent facet)."""
    b = np.zeros(mesh.n_nodes)
    np.add.at(b, mesh.facet_nodes.ravel(), np.repeat(mesh.facet_area / 4.0, 4))
    return b


def constraint_rows(mesh, m):
    """Sparse (m, n_dof) matrix whose i-th row integrates component i over the boundary."""
    b = boundary_weight_vector(mesh)
    n = mesh.n_nodes * m
    rows, cols, vals = [], [], []
    for i in range(m):
        rows.extend([i] * mesh.n_nodes)
        cols.extend(np.arange(mesh.n_nodes) * m + i)
        vals.extend(b)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, n))


def boundary_mean(fld_or_field, normalized=False):
    """Per-component boundary trace integral int_{dOmega} u (or its average)."""
    f = fld_or_field
    if f.mesh.is_graph:
        raise UnsupportedError("boundary_mean is defined for bounded-domain meshes")
    b = boundary_weight_vector(f.mesh)
    raw = b @ f.values
    if normalized:
        return raw / f.mesh.boundary_measure
    return raw


def interpolate(fld, points):
    """Trilinear interpolation of a DiscreteField at arbitrary points -> (n, m)."""
    cell_ids, local = fld.mesh.locate(points)
    psi = shape_values(local)  # (n, 8)
    conn = fld.mesh.cells[cell_ids]  # (n, 8)
    return np.einsum("np,npm->nm", psi, fld.values[conn])


def gradient_at_quadrature(fld, quadrature_order=2):
    """Gradients of the trilinear field at Gauss points: (C, G, m, 3)."""
    ref, _ = volume_quadrature(quadrature_order)
    grads = shape_gradients(ref) / fld.mesh.h  # (G, 8, 3)
    nodal = fld.values[fld.mesh.cells]  # (C, 8, m)
    return np.einsum("gpa,cpm->cgma", grads, nodal)


def values_at_quadrature(fld, quadrature_order=2):
    ref, _ = volume_quadrature(quadrature_order)
    psi = shape_values(ref)
    nodal = fld.values[fld.mesh.cells]
    return np.einsum("gp,cpm->cgm", psi, nodal)


def l2_norm(fld, quadrature_order=2):
    vals = values_at_quadrature(fld, quadrature_order)
    _, w = volume_quadrature(quadrature_order)
    return float(np.sqrt(np.einsum("g,cgm->", w * fld.mesh.h**3, vals**2)))


def gradient_l2_norm(fld, quadrature_order=2):
    g = gradient_at_quadrature(fld, quadrature_order)
    _, w = volume_quadrature(quadrature_order)
    return float(np.sqrt(np.einsum("g,cgma->", w * fld.mesh.h**3, g**2)))


def l2_error(fld, exact, quadrature_order=3):
    """||u_h - exact||_{L2} with the exact function evaluated at Gauss points."""
    pts, w = quadrature_points(fld.mesh, quadrature_order)
    vals = values_at_quadrature(fld, quadrature_order)
    ex = np.asarray(exact(pts.reshape(-1, 3)), dtype=float)
    if ex.ndim == 1:
        ex = ex[:, None]
    diff = vals - ex.reshape(vals.shape)
    return float(np.sqrt(np.einsum("g,cgm->", w, diff**2)))


def estimate_poincare_constant(mesh, tol=1e-10, max_iterations=200):
    """C in ||u|| <= C ||Du|| over the zero-boundary-trace subspace (scalar).

    Inverse iteration on the generalized problem (K, M) restricted to
    {b^T u = 0}, using the bordered factorization as the constrained inverse.
    """
    from .coeff import Identity, make_coefficient  # local import to avoid cycle

    K = assemble_stiffness(mesh, make_coefficient(Identity(m=1))).matrix
    M = assemble_mass(mesh, 1)
    b = boundary_weight_vector(mesh)
    n = mesh.n_nodes
    bordered = sp.bmat([[K, b[:, None]], [b[None, :], None]], format="csc")
    lu = spla.splu(bordered)

    u = mesh.nodes[:, 0] - mesh.nodes[:, 0].mean()
    u -= b * (b @ u) / (b @ b)
    u /= np.sqrt(u @ (M @ u))
    rho_prev = np.inf
    history = []
    for it in range(max_iterations):
        rhs = np.concatenate([M @ u, [0.0]])
        u = lu.solve(rhs)[:n]
        u /= np.sqrt(u @ (M @ u))
        rho = float(u @ (K @ u))
        history.append(rho)
        if abs(rho - rho_prev) <= tol * abs(rho):
            return 1.0 / np.sqrt(rho)
        rho_prev = rho
    raise NumericFailureError(
        "Poincare inverse iteration did not converge", diagnostics={"rayleigh": history}
    )


def export_matrix(matrix, path):
    """Coordinate-format text dump (row col value) for cross-checking."""
    coo = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        fh.write(f"# coo {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v!r}\n")


def export_field(fld, path):
    """Node-value table: x y z followed by the m component values."""
    with open(path, "w") as fh:
        fh.write(f"# field m={fld.m} nodes={fld.mesh.n_nodes}\n")
        for xyz, vals in zip(fld.mesh.nodes, fld.values):
            row = " ".join(repr(v) for v in vals)
            fh.write(f"{xyz[0]!r} {xyz[1]!r} {xyz[2]!r} {row}\n")
