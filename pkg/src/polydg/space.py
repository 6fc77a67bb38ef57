"""Modal DG spaces, quadrature and algebraic helpers on polygonal cells.

Each cell carries bounding-box-scaled monomials that are L2-orthonormalized
against the cell quadrature, so all mass-type cell blocks with constant
coefficients are (multiples of) the identity.  The six solution blocks are
laid out contiguously as (U, W, V, Z, S, R).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .mesh import MeshError

MAX_EXACTNESS = 20

BLOCKS = ("U", "W", "V", "Z", "S", "R")


# ---------------------------------------------------------------------------
# tensor algebra (2x2, trailing axes)
# ---------------------------------------------------------------------------

def tr2(tau):
    """Trace of a (..., 2, 2) tensor field."""
    return tau[..., 0, 0] + tau[..., 1, 1]


def dev2(tau):
    """Deviatoric part tau - tr(tau)/2 I."""
    out = np.array(tau, float, copy=True)
    half = 0.5 * tr2(tau)
    out[..., 0, 0] -= half
    out[..., 1, 1] -= half
    return out


def skew2(tau):
    """Single independent component of the skew part, (tau01 - tau10)/2."""
    return 0.5 * (tau[..., 0, 1] - tau[..., 1, 0])


def skew_embed(r):
    """Embed a scalar rotation r as the tensor [[0, r], [-r, 0]]."""
    r = np.asarray(r, float)
    out = np.zeros(r.shape + (2, 2))
    out[..., 0, 1] = r
    out[..., 1, 0] = -r
    return out


def tensor_ops(tau):
    """Return (trace, deviator, scalar skew component) of a 2x2 tensor."""
    tau = np.asarray(tau, float)
    return tr2(tau), dev2(tau), skew2(tau)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass
class QuadratureRule:
    points: np.ndarray   # (n, 2) or (n,) physical coordinates
    weights: np.ndarray  # (n,) carrying the area / length measure

    def integrate(self, values):
        return np.tensordot(self.weights, values, axes=(0, 0))


@lru_cache(maxsize=64)
def _gauss_1d(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


@lru_cache(maxsize=32)
def _triangle_rule(degree):
    """Collapsed-product rule on the reference triangle, exact to ``degree``.

    Duffy map (xi, eta) -> (xi (1 - eta), eta) of a Gauss-Legendre grid;
    the Jacobian (1 - eta) raises the eta-degree by one.
    """
    n_xi = (degree + 2) // 2
    n_eta = (degree + 3) // 2
    xi, wxi = _gauss_1d(max(n_xi, 1))
    eta, weta = _gauss_1d(max(n_eta, 1))
    xi = 0.5 * (xi + 1.0)
    eta = 0.5 * (eta + 1.0)
    wxi = 0.5 * wxi
    weta = 0.5 * weta
    X, Y = np.meshgrid(xi, eta, indexing="ij")
    W = np.outer(wxi, weta) * (1.0 - Y)
    pts = np.column_stack([(X * (1.0 - Y)).ravel(), Y.ravel()])
    return pts, W.ravel()


def cell_quadrature(points, centroid, degree):
    """Quadrature on a star-shaped polygon via its centroid fan.

    ``points`` is the ccw vertex loop; each fan triangle gets an affine
    image of the reference-triangle rule.
    """
    if degree > MAX_EXACTNESS:
        raise MeshError(f"quadrature exactness {degree} > {MAX_EXACTNESS}")
    ref_pts, ref_w = _triangle_rule(max(degree, 0))
    all_pts, all_w = [], []
    n = len(points)
    for k in range(n):
        v0, v1 = points[k], points[(k + 1) % n]
        B = np.column_stack([v0 - centroid, v1 - centroid])
        det = B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0]
        if det <= 0:
            raise MeshError("fan triangle with non-positive area "
                            "(cell not star-shaped)")
        all_pts.append(ref_pts @ B.T + centroid)
        all_w.append(ref_w * det)
    return QuadratureRule(np.vstack(all_pts), np.concatenate(all_w))


def face_quadrature(a, b, degree):
    """Gauss-Legendre rule mapped onto the segment from a to b."""
    if degree > MAX_EXACTNESS:
        raise MeshError(f"quadrature exactness {degree} > {MAX_EXACTNESS}")
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    length = np.linalg.norm(b - a)
    if length <= 0:
        raise MeshError("zero-length face")
    x, w = _gauss_1d(max((degree + 2) // 2, 1))
    t = 0.5 * (x + 1.0)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    return QuadratureRule(pts, 0.5 * length * w)


# ---------------------------------------------------------------------------
# per-cell modal basis
# ---------------------------------------------------------------------------

def n_modes(degree):
    return (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=32)
def _exponents(degree):
    return [(a, b) for tot in range(degree + 1) for a in range(tot, -1, -1)
            for b in (tot - a,)]


class CellBasis:
    """Orthonormal scalar modes on one cell.

    Monomials in bounding-box coordinates are orthonormalized with the
    inverse Cholesky factor of their quadrature Gram matrix.
    """

    def __init__(self, points, centroid, degree, quad):
        self.degree = degree
        self.nm = n_modes(degree)
        lo = points.min(axis=0)
        hi = points.max(axis=0)
        self.center = 0.5 * (lo + hi)
        self.halfwidth = 0.5 * (hi - lo)
        self.exponents = _exponents(degree)
        V = self._monomials(quad.points)
        G = V.T @ (quad.weights[:, None] * V)
        L = cholesky(G, lower=True)
        # coeff maps monomial values -> orthonormal modes
        self.coeff = solve_triangular(L, np.eye(self.nm), lower=True).T

    def _monomials(self, pts):
        xi = (pts[:, 0] - self.center[0]) / self.halfwidth[0]
        eta = (pts[:, 1] - self.center[1]) / self.halfwidth[1]
        cols = [xi ** a * eta ** b for a, b in self.exponents]
        return np.column_stack(cols)

    def _monomial_grads(self, pts):
        xi = (pts[:, 0] - self.center[0]) / self.halfwidth[0]
        eta = (pts[:, 1] - self.center[1]) / self.halfwidth[1]
        n = len(pts)
        gx = np.zeros((n, self.nm))
        gy = np.zeros((n, self.nm))
        for k, (a, b) in enumerate(self.exponents):
            if a > 0:
                gx[:, k] = a * xi ** (a - 1) * eta ** b / self.halfwidth[0]
            if b > 0:
                gy[:, k] = b * xi ** a * eta ** (b - 1) / self.halfwidth[1]
        return gx, gy

    def eval(self, pts):
        """Mode values at points, shape (npts, nm)."""
        return self._monomials(np.asarray(pts, float)) @ self.coeff

    def eval_grad(self, pts):
        """Values and gradients; gradients have shape (npts, nm, 2)."""
        pts = np.asarray(pts, float)
        vals = self._monomials(pts) @ self.coeff
        gx, gy = self._monomial_grads(pts)
        grads = np.stack([gx @ self.coeff, gy @ self.coeff], axis=-1)
        return vals, grads


_BLOCK_NCOMP = {"U": 2, "W": 2, "V": 2, "Z": 2, "S": 4, "R": 1}


class DgSpace:
    """Global block DoF layout and cached per-cell quadrature/basis data.

    Blocks (U, W, V, Z) live on p-cells with degree ``deg_p``; S lives on
    f-cells with degree ``deg_f`` and R with degree ``deg_f - 1``.
    Tensor components of S are ordered (00, 01, 10, 11); within a block a
    cell stores its components contiguously, modes fastest.
    """

    def __init__(self, mesh, deg_p=1, deg_f=None, quad_degree=None):
        if deg_f is None:
            deg_f = deg_p
        if deg_p < 1 or deg_f < 1:
            raise MeshError("polynomial degrees must be >= 1")
        self.mesh = mesh
        self.deg_p = deg_p
        self.deg_f = deg_f
        self.quad_degree = quad_degree or (2 * max(deg_p, deg_f) + 2)

        self.cell_quads = []
        self.cell_basis = []
        self.cell_basis_aux = [None] * mesh.n_cells  # R-space basis on f-cells
        for i in range(mesh.n_cells):
            pts = mesh.cell_points(i)
            ctr = mesh.cell_centroid[i]
            quad = cell_quadrature(pts, ctr, self.quad_degree)
            self.cell_quads.append(quad)
            deg = deg_p if mesh.cell_region[i] == "p" else deg_f
            self.cell_basis.append(CellBasis(pts, ctr, deg, quad))
            if mesh.cell_region[i] == "f":
                self.cell_basis_aux[i] = CellBasis(pts, ctr, deg_f - 1, quad)

        # cached values/gradients at the cell quadrature points
        self._vals = [b.eval_grad(q.points)
                      for b, q in zip(self.cell_basis, self.cell_quads)]

        p_cells = mesh.p_cells
        f_cells = mesh.f_cells
        self.nm_p = n_modes(deg_p)
        self.nm_f = n_modes(deg_f)
        self.nm_r = n_modes(deg_f - 1)
        np_cells, nf_cells = len(p_cells), len(f_cells)
        sizes = {"U": 2 * self.nm_p * np_cells, "W": 2 * self.nm_p * np_cells,
                 "V": 2 * self.nm_p * np_cells, "Z": 2 * self.nm_p * np_cells,
                 "S": 4 * self.nm_f * nf_cells, "R": self.nm_r * nf_cells}
        self.block_size = sizes
        self.block_offset = {}
        off = 0
        for b in BLOCKS:
            self.block_offset[b] = off
            off += sizes[b]
        self.ndof = off

        self._cell_pos = {}
        for k, c in enumerate(p_cells):
            self._cell_pos[("p", int(c))] = k
        for k, c in enumerate(f_cells):
            self._cell_pos[("f", int(c))] = k

    # -- DoF bookkeeping ------------------------------------------------

    def cell_nm(self, block, cell):
        if block == "S":
            return self.nm_f
        if block == "R":
            return self.nm_r
        return self.nm_p

    def block_dofs(self, block, cell):
        """Global indices of (ncomp, nm) coefficients of ``cell`` in ``block``."""
        region = "f" if block in ("S", "R") else "p"
        pos = self._cell_pos[(region, int(cell))]
        nm = self.cell_nm(block, cell)
        nc = _BLOCK_NCOMP[block]
        base = self.block_offset[block] + pos * nc * nm
        return base + np.arange(nc * nm).reshape(nc, nm)

    def block_slice(self, block):
        off = self.block_offset[block]
        return slice(off, off + self.block_size[block])

    def basis(self, cell, aux=False):
        return self.cell_basis_aux[cell] if aux else self.cell_basis[cell]

    def cell_values(self, cell):
        """Cached (values, gradients) at the cell quadrature points."""
        return self._vals[cell]

    def eval_basis(self, cell, pts, aux=False):
        return self.basis(cell, aux).eval_grad(pts)

    # -- field evaluation ------------------------------------------------

    def eval_block(self, x, block, cell, pts, aux=False):
        """Evaluate the ``block`` field of coefficient vector ``x`` on a cell.

        Returns an array of shape (npts, ncomp); gradients are available
        through :meth:`eval_block_grad`.
        """
        coeffs = x[self.block_dofs(block, cell)]
        vals = self.basis(cell, aux or block == "R").eval(pts)
        return vals @ coeffs.T

    def eval_block_grad(self, x, block, cell, pts):
        coeffs = x[self.block_dofs(block, cell)]
        vals, grads = self.basis(cell, block == "R").eval_grad(pts)
        field = vals @ coeffs.T
        grad = np.einsum("pmd,cm->pcd", grads, coeffs)
        return field, grad

    def project(self, block, cell, func):
        """Per-cell L2 projection coefficients of callable ``func(pts)``."""
        quad = self.cell_quads[cell]
        vals = self.basis(cell, block == "R").eval(quad.points)
        f = np.asarray(func(quad.points), float)
        if f.ndim == 1:
            f = f[:, None]
        return (vals * quad.weights[:, None]).T @ f  # (nm, ncomp)


# ---------------------------------------------------------------------------
# jumps and averages
# ---------------------------------------------------------------------------

def jump_average(kind, normal, trace_minus, trace_plus=None):
    """Jump and average of a field trace on a face.

    ``trace_minus`` is the trace from the cell the normal points away
    from (``cells[0]``); ``trace_plus``, when given, is the trace from
    the other side (whose outward normal is ``-normal``).  Boundary
    faces pass a single trace.  Shapes: scalar (...,), vector (..., 2),
    tensor (..., 2, 2).  Returns (jump, average) with the jump of a
    scalar a vector, of a vector a tensor (v x n), and of a tensor a
    vector (tau n).
    """
    n = np.asarray(normal, float)
    tm = np.asarray(trace_minus, float)
    if kind == "scalar":
        if tm.ndim != 1:
            raise MeshError("scalar trace must have shape (npts,)")
        if trace_plus is None:
            return tm[:, None] * n[None, :], tm
        tp = np.asarray(trace_plus, float)
        return (tm - tp)[:, None] * n[None, :], 0.5 * (tm + tp)
    if kind == "vector":
        if tm.ndim != 2 or tm.shape[1] != 2:
            raise MeshError("vector trace must have shape (npts, 2)")
        if trace_plus is None:
            return tm[:, :, None] * n[None, None, :], tm
        tp = np.asarray(trace_plus, float)
        return (tm - tp)[:, :, None] * n[None, None, :], 0.5 * (tm + tp)
    if kind == "tensor":
        if tm.ndim != 3 or tm.shape[1:] != (2, 2):
            raise MeshError("tensor trace must have shape (npts, 2, 2)")
        if trace_plus is None:
            return tm @ n, tm
        tp = np.asarray(trace_plus, float)
        return (tm - tp) @ n, 0.5 * (tm + tp)
    raise MeshError(f"unknown jump kind {kind!r}")


def normal_jump(normal, trace_minus, trace_plus=None):
    """Scalar normal jump of a vector field, v+ . n+ + v- . n-."""
    tm = np.asarray(trace_minus, float)
    if trace_plus is None:
        return tm @ normal
    return (tm - np.asarray(trace_plus, float)) @ normal
