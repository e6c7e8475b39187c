"""Coefficient tensors A[alpha, beta, i, j] for m x m systems in d = 3.

A field evaluates batches of points to arrays of shape (n, 3, 3, m, m); the
(md) x (md) matrix view used for ellipticity checks flattens row index
(alpha, i) against column index (beta, j).  All generators are deterministic
given their spec (and seed), and evaluation is order-independent, so assembled
operators are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import NonEllipticFieldError, NonEllipticSpecError

D = 3


@dataclass(frozen=True)
class Identity:
    m: int = 1


@dataclass(frozen=True)
class ScalarCheckerboard:
    """a(x) in {1, contrast}, constant per lattice cell, parity pattern.

    The seed shifts the parity phase so two seeds give complementary patterns.
    """

    contrast: float
    cell: float = 0.25
    seed: int = 0
    m: int = 1


@dataclass(frozen=True)
class CellwiseRandom:
    """Independent random symmetric (md x md) tensor per lattice cell.

    Eigenvalues are drawn uniformly from [lam_target, m_target], so the
    declared bounds hold by construction.
    """

    lam_target: float
    m_target: float
    cell: float = 0.25
    seed: int = 0
    m: int = 1


@dataclass(frozen=True)
class SkewPerturbed:
    """base + amplitude * S(x), with S(x) a unit-spectral-norm skew matrix per cell.

    The skew part drops out of every quadratic form, so ellipticity is
    inherited from the base.  The orientation of S is drawn per lattice cell
    (seeded): a constant skew matrix would act only through the conormal data
    (div of a constant skew gradient vanishes identically), while a rough skew
    field makes the operator genuinely non-self-adjoint in the interior.
    """

    base: Union[Identity, ScalarCheckerboard, CellwiseRandom]
    amplitude: float
    cell: float = 0.25
    seed: int = 0


@dataclass(frozen=True)
class SmoothVMO:
    """a(x) = 1 + amplitude * prod_i sin(2 pi frequency x_i); requires |amplitude| < 1."""

    frequency: float = 1.0
    amplitude: float = 0.5
    m: int = 1


CoefficientSpec = Union[Identity, ScalarCheckerboard, CellwiseRandom, SkewPerturbed, SmoothVMO]


def _canonical_skew(md):
    """Deterministic skew matrix with unit spectral norm."""
    s = np.triu(np.ones((md, md)), k=1)
    s = s - s.T
    return s / np.linalg.norm(s, 2)


class CoefficientField:
    """Evaluable coefficient tensor with declared ellipticity bounds."""

    def __init__(self, spec, m, lam, bound, eval_fn, base=None):
        self.spec = spec
        self.m = int(m)
        self.lam = float(lam)
        self.bound = float(bound)
        self._eval = eval_fn
        self._adjoint_base = base
        if self.lam > self.bound + 1e-12:
            raise NonEllipticSpecError(f"declared lambda={lam} exceeds bound M={bound}")

    def evaluate(self, points):
        """points (n, 3) -> tensors (n, 3, 3, m, m)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = self._eval(pts)
        assert out.shape == (len(pts), D, D, self.m, self.m)
        return out

    def matrices(self, points):
        """Flattened (md x md) view: rows (alpha, i), columns (beta, j)."""
        a = self.evaluate(points)
        md = D * self.m
        return a.transpose(0, 1, 3, 2, 4).reshape(len(a), md, md)

    @property
    def is_adjoint(self):
        return self._adjoint_base is not None


def make_coefficient(spec):
    if isinstance(spec, Identity):
        return _identity_field(spec)
    if isinstance(spec, ScalarCheckerboard):
        return _checkerboard_field(spec)
    if isinstance(spec, CellwiseRandom):
        return _cellwise_random_field(spec)
    if isinstance(spec, SkewPerturbed):
        return _skew_field(spec)
    if isinstance(spec, SmoothVMO):
        return _smooth_field(spec)
    raise TypeError(f"unknown coefficient spec: {spec!r}")


def _identity_tensor(m):
    a = np.zeros((D, D, m, m))
    for al in range(D):
        a[al, al] = np.eye(m)
    return a


def _identity_field(spec):
    a = _identity_tensor(spec.m)

    def ev(pts):
        return np.broadcast_to(a, (len(pts),) + a.shape).copy()

    return CoefficientField(spec, spec.m, 1.0, 1.0, ev)


def _scalar_times_identity(vals, m):
    a = _identity_tensor(m)
    return vals[:, None, None, None, None] * a[None]


def _checkerboard_field(spec):
    if spec.contrast < 1:
        raise NonEllipticSpecError(f"checkerboard contrast must be >= 1, got {spec.contrast}")
    if not np.isfinite(spec.contrast) or spec.cell <= 0:
        raise NonEllipticSpecError("checkerboard parameters must be finite and positive")

    def ev(pts):
        idx = np.floor(pts / spec.cell + 1e-12).astype(np.int64)
        parity = (idx.sum(axis=1) + spec.seed) % 2
        vals = np.where(parity == 0, 1.0, float(spec.contrast))
        return _scalar_times_identity(vals, spec.m)

    return CoefficientField(spec, spec.m, 1.0, float(spec.contrast), ev)


def _cellwise_random_field(spec):
    if spec.lam_target <= 0:
        raise NonEllipticSpecError(f"lam_target must be positive, got {spec.lam_target}")
    if spec.m_target < spec.lam_target or spec.cell <= 0:
        raise NonEllipticSpecError("need m_target >= lam_target > 0 and cell > 0")
    md = D * spec.m
    cache = {}

    def cell_matrix(key):
        mat = cache.get(key)
        if mat is None:
            rng = np.random.default_rng((spec.seed, 0x5EED, key[0], key[1], key[2]))
            q, _ = np.linalg.qr(rng.standard_normal((md, md)))
            eigs = rng.uniform(spec.lam_target, spec.m_target, size=md)
            mat = (q * eigs) @ q.T
            mat = 0.5 * (mat + mat.T)
            cache[key] = mat
        return mat

    def ev(pts):
        idx = np.floor(pts / spec.cell + 1e-12).astype(np.int64)
        uniq, inv = np.unique(idx, axis=0, return_inverse=True)
        mats = np.stack([cell_matrix(tuple(int(v) for v in k)) for k in uniq])
        out = mats[inv.reshape(-1)]
        return out.reshape(len(pts), D, spec.m, D, spec.m).transpose(0, 1, 3, 2, 4)

    return CoefficientField(spec, spec.m, float(spec.lam_target), float(spec.m_target), ev)


def _skew_field(spec):
    if not np.isfinite(spec.amplitude) or spec.amplitude < 0:
        raise NonEllipticSpecError(f"skew amplitude must be finite and >= 0, got {spec.amplitude}")
    if spec.cell <= 0:
        raise NonEllipticSpecError("skew cell size must be positive")
    base = make_coefficient(spec.base)
    md = D * base.m
    cache = {}

    def cell_skew(key):
        mat = cache.get(key)
        if mat is None:
            rng = np.random.default_rng((spec.seed, 0xA5CE, key[0], key[1], key[2]))
            g = rng.standard_normal((md, md))
            s = g - g.T
            mat = s / np.linalg.norm(s, 2)
            cache[key] = mat
        return mat

    def ev(pts):
        idx = np.floor(pts / spec.cell + 1e-12).astype(np.int64)
        uniq, inv = np.unique(idx, axis=0, return_inverse=True)
        mats = np.stack([cell_skew(tuple(int(v) for v in k)) for k in uniq])
        skew = spec.amplitude * mats[inv.reshape(-1)]
        skew_t = skew.reshape(len(pts), D, base.m, D, base.m).transpose(0, 1, 3, 2, 4)
        return base.evaluate(pts) + skew_t

    return CoefficientField(spec, base.m, base.lam, base.bound + spec.amplitude, ev)


def _smooth_field(spec):
    if abs(spec.amplitude) >= 1:
        raise NonEllipticSpecError(f"smooth amplitude must satisfy |a| < 1, got {spec.amplitude}")

    def ev(pts):
        vals = 1.0 + spec.amplitude * np.prod(np.sin(2 * np.pi * spec.frequency * pts), axis=1)
        return _scalar_times_identity(vals, spec.m)

    lam = 1.0 - abs(spec.amplitude)
    return CoefficientField(spec, spec.m, lam, 1.0 + abs(spec.amplitude), ev)


def adjoint_coefficients(fld):
    """tA[alpha, beta, i, j] = A[beta, alpha, j, i]; an involution."""
    if fld._adjoint_base is not None:
        return fld._adjoint_base

    def ev(pts):
        return fld.evaluate(pts).transpose(0, 2, 1, 4, 3)

    adj = CoefficientField(fld.spec, fld.m, fld.lam, fld.bound, ev, base=fld)
    return adj


def verify_ellipticity_bounds(fld, sample_points, probe_count=8, seed=0):
    """Estimate (lambda, M) over samples and assert the declared bounds.

    lambda_est is the smallest eigenvalue of the symmetric part over samples,
    M_est the largest spectral norm.  ``probe_count`` random (xi, eta) pairs
    per sample additionally exercise the two quadratic-form inequalities.
    """
    if probe_count < 1:
        raise ValueError("probe_count must be >= 1")
    mats = fld.matrices(sample_points)
    sym = 0.5 * (mats + mats.transpose(0, 2, 1))
    lam_est = float(np.linalg.eigvalsh(sym)[:, 0].min())
    m_est = float(max(np.linalg.norm(m, 2) for m in mats))
    if lam_est <= 0:
        raise NonEllipticFieldError(f"field is not elliptic: lambda_est={lam_est}")
    if lam_est < fld.lam - 1e-12:
        raise NonEllipticFieldError(
            f"measured lambda {lam_est} violates declared lambda {fld.lam}"
        )
    if m_est > fld.bound + 1e-12:
        raise NonEllipticFieldError(f"measured bound {m_est} exceeds declared M {fld.bound}")

    rng = np.random.default_rng(seed)
    md = mats.shape[1]
    xi = rng.standard_normal((probe_count, md))
    eta = rng.standard_normal((probe_count, md))
    for mat in mats:
        quad = np.einsum("pa,ab,pb->p", xi, mat, xi)
        norms2 = (xi**2).sum(axis=1)
        if np.any(quad < fld.lam * norms2 - 1e-10 * norms2):
            raise NonEllipticFieldError("quadratic-form probe violates the coercivity bound")
        cross = np.abs(np.einsum("pa,ab,pb->p", eta, mat, xi))
        if np.any(cross > fld.bound * np.linalg.norm(xi, axis=1) * np.linalg.norm(eta, axis=1) + 1e-10):
            raise NonEllipticFieldError("quadratic-form probe violates the boundedness bound")
    return lam_est, m_est


def export_cell_table(fld, mesh, path):
    """One line per mesh cell: i j k followed by the row-major tensor entries."""
    centers = mesh.cell_centers()
    tensors = fld.evaluate(centers)
    with open(path, "w") as fh:
        fh.write(f"# coefficient snapshot m={fld.m} lam={fld.lam!r} M={fld.bound!r}\n")
        for ijk, a in zip(mesh.cells_ijk, tensors):
            flat = " ".join(repr(v) for v in a.ravel())
            fh.write(f"{ijk[0]} {ijk[1]} {ijk[2]} {flat}\n")
