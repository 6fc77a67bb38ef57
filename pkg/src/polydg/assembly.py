"""Assembly of the semi-discrete block system.

All bilinear forms are assembled once into sparse block matrices; only
the load vector is time dependent.  Geometry/trace data per face is
cached so repeated load assembly stays cheap.

Face sets: the elastic and storage forms penalize interior p-faces and
the p-Dirichlet boundary; the fluid stress form penalizes interior
f-faces and the f-Neumann boundary (where the stress trace is data).
Interface faces carry only damping, coupling and manufactured-source
terms.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import build_interface_segmentation
from .space import face_quadrature

# deviatoric projector on (t00, t01, t10, t11) component vectors
DEV4 = np.array([[0.5, 0.0, 0.0, -0.5],
                 [0.0, 1.0, 0.0, 0.0],
                 [0.0, 0.0, 1.0, 0.0],
                 [-0.5, 0.0, 0.0, 0.5]])

TCOMP = [(0, 0), (0, 1), (1, 0), (1, 1)]


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty constants; the per-face functions scale like coef * p^2 / h."""

    c1: float = 10.0
    c2: float = 10.0
    c3: float = 10.0

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3) <= 0:
            raise ValueError("penalty constants must be positive")


def penalty_chi(mesh, space, material, spec, face, which):
    """Evaluate the penalization function on one face.

    ``which`` selects the form: "e" (elastic), "p" (storage) or "f"
    (fluid stress).  Interior faces take the max of coef * p^2 / h over
    the two neighbours; boundary faces use the single-cell value.  The
    penalty constant multiplies both branches: dropping it on boundary
    faces makes the elastic and storage forms indefinite.
    """
    if isinstance(face, int):
        face = mesh.faces[face]
    if which == "e":
        coef, c, deg, region = material.cbar, spec.c1, space.deg_p, "p"
    elif which == "p":
        coef, c, deg, region = material.mbar, spec.c2, space.deg_p, "p"
    elif which == "f":
        coef, c, deg, region = 1.0 / material.rho_f, spec.c3, space.deg_f, "f"
    else:
        raise ValueError(f"unknown penalty selector {which!r}")
    for cell in face.cells:
        if mesh.cell_region[cell] != region:
            raise ValueError(f"face region mismatch for chi_{which}")
    vals = [coef * deg ** 2 / mesh.cell_diameter[cell] for cell in face.cells]
    return c * max(vals)


class _COO:
    """Triplet accumulator for one sparse block."""

    def __init__(self, shape):
        self.shape = shape
        self.i = []
        self.j = []
        self.v = []

    def add(self, rows, cols, block):
        rows = np.asarray(rows).ravel()
        cols = np.asarray(cols).ravel()
        self.i.append(np.repeat(rows, len(cols)))
        self.j.append(np.tile(cols, len(rows)))
        self.v.append(np.asarray(block, float).ravel())

    def tocsr(self):
        if not self.i:
            return sp.csr_matrix(self.shape)
        m = sp.coo_matrix(
            (np.concatenate(self.v),
             (np.concatenate(self.i), np.concatenate(self.j))),
            shape=self.shape)
        return m.tocsr()


def _rel(space, block, cell):
    return space.block_dofs(block, cell) - space.block_offset[block]


def _face_ctx(mesh, space, k, aux=False):
    """Quadrature points/weights and per-side basis traces of face ``k``."""
    f = mesh.faces[k]
    quad = face_quadrature(f.a, f.b, space.quad_degree)
    sides = []
    for cell in f.cells:
        vals, grads = space.eval_basis(cell, quad.points, aux=aux)
        sides.append((cell, vals, grads))
    return f, quad, sides


# ---------------------------------------------------------------------------
# poroelastic forms
# ---------------------------------------------------------------------------

def _elastic_flux(grads, normal, lam, mu):
    """sigma_e(phi e_c) n for all modes; shape (nq, 2, 2, nm) = (q, a, c, m)."""
    nq, nm, _ = grads.shape
    dn = grads @ normal                      # (nq, nm)
    out = np.empty((nq, 2, 2, nm))
    for a in range(2):
        for c in range(2):
            t = mu * normal[c] * grads[:, :, a] + lam * normal[a] * grads[:, :, c]
            if a == c:
                t = t + mu * dn
            out[:, a, c, :] = t
    return out


def assemble_poro(mesh, space, material, spec, segmentation=None):
    """Mass, damping, elastic and storage blocks on the p-region layout."""
    nP = space.block_size["U"]
    mat = material
    Ae = _COO((nP, nP))
    Bp = _COO((nP, nP))

    # volume terms
    for cell in mesh.p_cells:
        quad = space.cell_quads[cell]
        _, grads = space.cell_values(cell)
        w = quad.weights
        K = np.empty((2, 2, space.nm_p, space.nm_p))
        for a in range(2):
            for b in range(2):
                K[a, b] = grads[:, :, a].T @ (w[:, None] * grads[:, :, b])
        kdiag = K[0, 0] + K[1, 1]
        dofs = _rel(space, "U", cell)
        ae_blk = np.empty((2 * space.nm_p, 2 * space.nm_p))
        bp_blk = np.empty_like(ae_blk)
        nm = space.nm_p
        # test comp a, trial comp c: K[alpha, beta][k, m] = int d_a phi_k d_b phi_m
        for a in range(2):
            for c in range(2):
                blk = mat.mu * K[c, a] + mat.lam * K[a, c]
                if a == c:
                    blk = blk + mat.mu * kdiag
                ae_blk[a * nm:(a + 1) * nm, c * nm:(c + 1) * nm] = blk
                bp_blk[a * nm:(a + 1) * nm, c * nm:(c + 1) * nm] = mat.m * K[a, c]
        Ae.add(dofs, dofs, ae_blk)
        Bp.add(dofs, dofs, bp_blk)

    # face terms: interior p-faces and the p-Dirichlet boundary
    for k in mesh.faces_with_tag("interior_p", "dirichlet_p"):
        f, quad, sides = _face_ctx(mesh, space, k)
        n = f.normal
        w = quad.weights
        chi_e = penalty_chi(mesh, space, mat, spec, f, "e")
        chi_p = penalty_chi(mesh, space, mat, spec, f, "p")
        mean_w = 1.0 if f.is_boundary else 0.5
        signs = (1.0, -1.0)
        fluxes = [_elastic_flux(g, n, mat.lam, mat.mu) for _, _, g in sides]
        nm = space.nm_p
        for i, (ci, vi, _) in enumerate(sides):
            di = _rel(space, "U", ci)
            for j, (cj, vj, gj) in enumerate(sides):
                dj = _rel(space, "U", cj)
                cons = np.empty((2 * nm, 2 * nm))
                pen = np.zeros_like(cons)
                wvi = w[:, None] * vi
                vv = wvi.T @ vj
                for a in range(2):
                    for c in range(2):
                        blk = -mean_w * signs[i] * np.einsum(
                            "qk,qm->km", wvi, fluxes[j][:, a, c, :])
                        cons[a * nm:(a + 1) * nm, c * nm:(c + 1) * nm] = blk
                        if a == c:
                            pen[a * nm:(a + 1) * nm, c * nm:(c + 1) * nm] = \
                                chi_e * signs[i] * signs[j] * vv
                Ae.add(di, dj, cons + pen)
                Ae.add(dj, di, cons.T)
                # storage form: normal jumps and divergence means
                div_j = gj  # (nq, nm, 2); flux m * d_c phi
                consb = np.empty((2 * nm, 2 * nm))
                penb = np.empty_like(consb)
                for a in range(2):
                    for c in range(2):
                        blk = -mean_w * signs[i] * n[a] * mat.m * (
                            wvi.T @ div_j[:, :, c])
                        consb[a * nm:(a + 1) * nm, c * nm:(c + 1) * nm] = blk
                        penb[a * nm:(a + 1) * nm, c * nm:(c + 1) * nm] = \
                            chi_p * signs[i] * signs[j] * n[a] * n[c] * vv
                Bp.add(di, dj, consb + penb)
                Bp.add(dj, di, consb.T)

    eye = sp.identity(nP, format="csr")
    blocks = {
        "Mp_rho": mat.rho * eye,
        "Mp_rhof": mat.rho_f * eye,
        "Mp_rhow": mat.rho_w * eye,
        "Dp_visc": mat.eta_over_kappa * eye,
        "Ae": Ae.tocsr(),
        "Bp": Bp.tocsr(),
    }

    # interface damping <gamma w . n_p, z . n_p>
    Dg = _COO((nP, nP))
    if mat.gamma > 0 and segmentation is not None:
        for seg in segmentation.segments:
            quad = face_quadrature(seg.a, seg.b, space.quad_degree)
            vals = space.basis(seg.p_cell).eval(quad.points)
            n = segmentation.normal
            dofs = _rel(space, "U", seg.p_cell)
            vv = vals.T @ (quad.weights[:, None] * vals)
            nm = space.nm_p
            blk = np.empty((2 * nm, 2 * nm))
            for a in range(2):
                for c in range(2):
                    blk[a * nm:(a + 1) * nm, c * nm:(c + 1) * nm] = \
                        mat.gamma * n[a] * n[c] * vv
            Dg.add(dofs, dofs, blk)
    blocks["Dp_gamma"] = Dg.tocsr()
    return blocks


# ---------------------------------------------------------------------------
# fluid forms
# ---------------------------------------------------------------------------

def assemble_fluid(mesh, space, material, spec, segmentation=None):
    """Deviatoric mass, stress stiffness, slip damping and rotation pairing."""
    nS = space.block_size["S"]
    nR = space.block_size["R"]
    mat = material
    Af = _COO((nS, nS))
    Mf = _COO((nS, nS))
    Bf = _COO((nS, nR))
    nmf = space.nm_f

    for cell in mesh.f_cells:
        quad = space.cell_quads[cell]
        vals, grads = space.cell_values(cell)
        w = quad.weights
        dofs = _rel(space, "S", cell)
        # M^f = (2 mu_f)^{-1} (dev ., dev .): orthonormal modes
        Mf.add(dofs, dofs, np.kron(DEV4 / (2.0 * mat.mu_f), np.eye(nmf)))
        K = np.empty((2, 2, nmf, nmf))
        for a in range(2):
            for b in range(2):
                K[a, b] = grads[:, :, a].T @ (w[:, None] * grads[:, :, b])
        blk = np.zeros((4 * nmf, 4 * nmf))
        for it, (al, be) in enumerate(TCOMP):
            for jt, (alp, bep) in enumerate(TCOMP):
                if al == alp:
                    blk[it * nmf:(it + 1) * nmf, jt * nmf:(jt + 1) * nmf] = \
                        K[be, bep] / mat.rho_f
        Af.add(dofs, dofs, blk)
        # B^f(r, tau) = int r (tau01 - tau10)
        aux = space.basis(cell, aux=True)
        cross = vals.T @ (w[:, None] * aux.eval(quad.points))
        rdofs = _rel(space, "R", cell)
        Bf.add(dofs[1], rdofs, cross)
        Bf.add(dofs[2], rdofs, -cross)

    for k in mesh.faces_with_tag("interior_f", "neumann_f"):
        f, quad, sides = _face_ctx(mesh, space, k)
        n = f.normal
        w = quad.weights
        chi_f = penalty_chi(mesh, space, mat, spec, f, "f")
        mean_w = 1.0 if f.is_boundary else 0.5
        signs = (1.0, -1.0)
        for i, (ci, vi, _) in enumerate(sides):
            di = _rel(space, "S", ci)
            wvi = w[:, None] * vi
            for j, (cj, vj, gj) in enumerate(sides):
                dj = _rel(space, "S", cj)
                vv = wvi.T @ vj
                gmix = np.empty((2, nmf, nmf))
                for b in range(2):
                    gmix[b] = wvi.T @ gj[:, :, b]
                cons = np.zeros((4 * nmf, 4 * nmf))
                pen = np.zeros_like(cons)
                for it, (al, be) in enumerate(TCOMP):
                    for jt, (alp, bep) in enumerate(TCOMP):
                        if al != alp:
                            continue
                        cons[it * nmf:(it + 1) * nmf, jt * nmf:(jt + 1) * nmf] = \
                            -mean_w * signs[i] * n[be] * gmix[bep] / mat.rho_f
                        pen[it * nmf:(it + 1) * nmf, jt * nmf:(jt + 1) * nmf] = \
                            chi_f * signs[i] * signs[j] * n[be] * n[bep] * vv
                Af.add(di, dj, cons + pen)
                Af.add(dj, di, cons.T)

    # D^f = <delta^{-1} Sigma n_p ^ n_p, tau n_p ^ n_p>_I
    Dd = _COO((nS, nS))
    if segmentation is not None:
        n = segmentation.normal
        t = segmentation.tangent
        for seg in segmentation.segments:
            quad = face_quadrature(seg.a, seg.b, space.quad_degree)
            vals = space.basis(seg.f_cell).eval(quad.points)
            vv = vals.T @ (quad.weights[:, None] * vals)
            dofs = _rel(space, "S", seg.f_cell)
            blk = np.zeros((4 * nmf, 4 * nmf))
            for it, (al, be) in enumerate(TCOMP):
                for jt, (alp, bep) in enumerate(TCOMP):
                    coef = t[al] * n[be] * t[alp] * n[bep] / mat.delta
                    if coef != 0.0:
                        blk[it * nmf:(it + 1) * nmf, jt * nmf:(jt + 1) * nmf] = \
                            coef * vv
            Dd.add(dofs, dofs, blk)

    return {"Mf": Mf.tocsr(), "Af": Af.tocsr(), "Bf": Bf.tocsr(),
            "Df_delta": Dd.tocsr()}


# ---------------------------------------------------------------------------
# interface coupling
# ---------------------------------------------------------------------------

def assemble_coupling(mesh, space, material, segmentation):
    """Blocks pairing p-side velocities with f-side stress traces on Gamma_I.

    N couples w.n_p with (tau n_p).n_p, N_alpha couples alpha u.n_p the
    same way, and T couples the tangential pair; rows live on the stress
    layout, columns on the p-region layout.
    """
    nS = space.block_size["S"]
    nP = space.block_size["U"]
    N = _COO((nS, nP))
    Na = _COO((nS, nP))
    T = _COO((nS, nP))
    nmf, nmp = space.nm_f, space.nm_p
    if segmentation is None or not segmentation.segments:
        return {"N": N.tocsr(), "N_alpha": Na.tocsr(), "T": T.tocsr()}
    n = segmentation.normal
    t = segmentation.tangent
    for seg in segmentation.segments:
        quad = face_quadrature(seg.a, seg.b, space.quad_degree)
        vp = space.basis(seg.p_cell).eval(quad.points)
        vf = space.basis(seg.f_cell).eval(quad.points)
        cross = vf.T @ (quad.weights[:, None] * vp)  # (nmf, nmp)
        ds = _rel(space, "S", seg.f_cell)
        dp = _rel(space, "U", seg.p_cell)
        bn = np.zeros((4 * nmf, 2 * nmp))
        bt = np.zeros_like(bn)
        for it, (al, be) in enumerate(TCOMP):
            for c in range(2):
                bn[it * nmf:(it + 1) * nmf, c * nmp:(c + 1) * nmp] = \
                    n[al] * n[be] * n[c] * cross
                bt[it * nmf:(it + 1) * nmf, c * nmp:(c + 1) * nmp] = \
                    t[al] * n[be] * t[c] * cross
        N.add(ds, dp, bn)
        Na.add(ds, dp, material.alpha * bn)
        T.add(ds, dp, bt)
    return {"N": N.tocsr(), "N_alpha": Na.tocsr(), "T": T.tocsr()}


# ---------------------------------------------------------------------------
# global system
# ---------------------------------------------------------------------------

@dataclass
class AssembledSystem:
    """Sparse block matrices of M X' + A X = F plus their ingredients."""

    M: sp.csr_matrix
    A: sp.csr_matrix
    blocks: dict
    mesh: object
    space: object
    material: object
    spec: PenaltySpec
    segmentation: object = None

    def lyapunov_energy(self, x):
        """The quadratic form whose theta-steps are exactly dissipative.

        E = 1/2 [ (V,Z)^T M^p (V,Z) + (U,W)^T A^p (U,W) + S^T A^f S ].
        """
        s = self.space
        b = self.blocks
        beta = self.material.beta
        U = x[s.block_slice("U")]
        W = x[s.block_slice("W")]
        V = x[s.block_slice("V")]
        Z = x[s.block_slice("Z")]
        S = x[s.block_slice("S")]
        kin = (V @ (b["Mp_rho"] @ V) + 2.0 * V @ (b["Mp_rhof"] @ Z)
               + Z @ (b["Mp_rhow"] @ Z))
        bu = beta * U + W
        pot = U @ (b["Ae"] @ U) + bu @ (b["Bp"] @ bu)
        return 0.5 * (kin + pot + S @ (b["Af"] @ S))


def build_global(blocks, space, material):
    """Place the assembled blocks into the global (M, A) pair."""
    nP = space.block_size["U"]
    eyeP = sp.identity(nP, format="csr")
    b = blocks
    beta = material.beta
    NT = (b["N_alpha"] + b["T"])
    M = sp.bmat([
        [eyeP, None, None, None, None, None],
        [None, eyeP, None, None, None, None],
        [None, None, b["Mp_rho"], b["Mp_rhof"], -NT.T, None],
        [None, None, b["Mp_rhof"], b["Mp_rhow"], -b["N"].T, None],
        [None, None, None, None, b["Mf"] + b["Df_delta"], None],
        [None, None, None, None, b["Bf"].T,
         sp.csr_matrix((space.block_size["R"], space.block_size["R"]))],
    ], format="csr")
    A = sp.bmat([
        [None, None, -eyeP, None, None, None],
        [sp.csr_matrix((nP, nP)), None, None, -eyeP, None, None],
        [b["Ae"] + beta ** 2 * b["Bp"], beta * b["Bp"], None, None, None, None],
        [beta * b["Bp"], b["Bp"], None,
         b["Dp_visc"] + b["Dp_gamma"], None, None],
        [None, None, NT, b["N"], b["Af"], b["Bf"]],
        [None, None, None, None, None,
         sp.csr_matrix((space.block_size["R"], space.block_size["R"]))],
    ], format="csr")
    return M, A


def assemble_system(mesh, space, material, spec=None):
    """Assemble every block and the global pair in one call."""
    spec = spec or PenaltySpec()
    seg = None
    if mesh.interface_faces:
        seg = build_interface_segmentation(mesh)
    blocks = assemble_poro(mesh, space, material, spec, seg)
    blocks.update(assemble_fluid(mesh, space, material, spec, seg))
    blocks.update(assemble_coupling(mesh, space, material, seg))
    M, A = build_global(blocks, space, material)
    return AssembledSystem(M, A, blocks, mesh, space, material, spec, seg)


def fluid_div_gram(mesh, space, material):
    """Gram matrix of the volume term rho_f^{-1} (div ., div .) on S."""
    nS = space.block_size["S"]
    G = _COO((nS, nS))
    nmf = space.nm_f
    for cell in mesh.f_cells:
        quad = space.cell_quads[cell]
        _, grads = space.cell_values(cell)
        w = quad.weights
        K = np.empty((2, 2, nmf, nmf))
        for a in range(2):
            for b in range(2):
                K[a, b] = grads[:, :, a].T @ (w[:, None] * grads[:, :, b])
        blk = np.zeros((4 * nmf, 4 * nmf))
        for it, (al, be) in enumerate(TCOMP):
            for jt, (alp, bep) in enumerate(TCOMP):
                if al == alp:
                    blk[it * nmf:(it + 1) * nmf, jt * nmf:(jt + 1) * nmf] = \
                        K[be, bep] / material.rho_f
        dofs = _rel(space, "S", cell)
        G.add(dofs, dofs, blk)
    return G.tocsr()


def fluid_jump_gram(mesh, space, material, spec,
                    tags=("interior_f", "neumann_f")):
    """Gram of the chi_f-weighted stress jumps over the given face tags."""
    nS = space.block_size["S"]
    G = _COO((nS, nS))
    nmf = space.nm_f
    for k in mesh.faces_with_tag(*tags):
        f, quad, sides = _face_ctx(mesh, space, k)
        n = f.normal
        w = quad.weights
        chi_f = penalty_chi(mesh, space, material, spec, f, "f")
        signs = (1.0, -1.0)
        for i, (ci, vi, _) in enumerate(sides):
            wvi = w[:, None] * vi
            for j, (cj, vj, _) in enumerate(sides):
                vv = wvi.T @ vj
                blk = np.zeros((4 * nmf, 4 * nmf))
                for it, (al, be) in enumerate(TCOMP):
                    for jt, (alp, bep) in enumerate(TCOMP):
                        if al == alp:
                            blk[it * nmf:(it + 1) * nmf,
                                jt * nmf:(jt + 1) * nmf] = \
                                chi_f * signs[i] * signs[j] * n[be] * n[bep] * vv
                G.add(_rel(space, "S", ci), _rel(space, "S", cj), blk)
    return G.tocsr()


def fluid_interface_trace_gram(mesh, space, material, spec, segmentation):
    """Gram of chi_f^{1/2} tau n_p over the interface (f-side traces)."""
    nS = space.block_size["S"]
    G = _COO((nS, nS))
    nmf = space.nm_f
    if segmentation is None:
        return G.tocsr()
    n = segmentation.normal
    for seg in segmentation.segments:
        quad = face_quadrature(seg.a, seg.b, space.quad_degree)
        vals = space.basis(seg.f_cell).eval(quad.points)
        chi_f = (spec.c3 * space.deg_f ** 2
                 / (material.rho_f * mesh.cell_diameter[seg.f_cell]))
        vv = vals.T @ (quad.weights[:, None] * vals)
        blk = np.zeros((4 * nmf, 4 * nmf))
        for it, (al, be) in enumerate(TCOMP):
            for jt, (alp, bep) in enumerate(TCOMP):
                if al == alp:
                    blk[it * nmf:(it + 1) * nmf, jt * nmf:(jt + 1) * nmf] = \
                        chi_f * n[be] * n[bep] * vv
        dofs = _rel(space, "S", seg.f_cell)
        G.add(dofs, dofs, blk)
    return G.tocsr()


def dump_blocks(blocks, directory):
    """Write each named block as 'row col value' text, one file per block."""
    os.makedirs(directory, exist_ok=True)
    for name, mat in blocks.items():
        coo = mat.tocoo()
        path = os.path.join(directory, f"{name}.txt")
        with open(path, "w") as fh:
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {v:.17g}\n")


# ---------------------------------------------------------------------------
# loads
# ---------------------------------------------------------------------------

@dataclass
class SourceSet:
    """Problem data as vectorized callables of (points, t); None means zero.

    Volume: f_p, g_p -> (n, 2); F_f -> (n, 2, 2).
    Fluid velocity data G_fD on the f-Dirichlet boundary -> (n, 2); the
    integrated history H = int_0^t h_f + u_f0 on the interface -> (n, 2).
    Essential data: u_D(pts, t) -> (n, 2) and wn_D(pts, t, normal) -> (n,)
    on the p-Dirichlet boundary, Sn_fN(pts, t, normal) -> (n, 2)
    (time-integrated traction) on the f-Neumann boundary.  Natural
    p-data: g_pN(pts, t, normal) -> (n, 2), q_pN(pts, t) -> (n,).
    Interface extras fI1..fI5 -> (n,) for manufactured cases.
    """

    f_p: callable = None
    g_p: callable = None
    F_f: callable = None
    G_fD: callable = None
    H_I: callable = None
    u_D: callable = None
    wn_D: callable = None
    g_pN: callable = None
    q_pN: callable = None
    Sn_fN: callable = None
    fI1: callable = None
    fI2: callable = None
    fI3: callable = None
    fI4: callable = None
    fI5: callable = None


class LoadAssembler:
    """Time-dependent right-hand side F(t) for a fixed source set."""

    def __init__(self, mesh, space, material, spec, sources,
                 segmentation=None):
        self.mesh = mesh
        self.space = space
        self.material = material
        self.spec = spec or PenaltySpec()
        self.src = sources
        if segmentation is None and mesh.interface_faces:
            segmentation = build_interface_segmentation(mesh)
        self.seg = segmentation
        self._prep()

    def _prep(self):
        mesh, space = self.mesh, self.space
        self.p_cells = [(c, space.cell_quads[c], space.cell_values(c)[0])
                        for c in mesh.p_cells]
        self.f_cells = [(c, space.cell_quads[c], space.cell_values(c)[0])
                        for c in mesh.f_cells]
        # stacked quadrature data so volume sources evaluate in one call
        self._vol = {}
        for region, items, block in (("p", self.p_cells, "U"),
                                     ("f", self.f_cells, "S")):
            if not items:
                continue
            pts = np.vstack([q.points for _, q, _ in items])
            rows, cols, vals = [], [], []
            row0 = 0
            comp_idx = []
            nm = space.nm_p if region == "p" else space.nm_f
            for c, quad, bvals in items:
                nq = len(quad.weights)
                wv = quad.weights[:, None] * bvals
                rows.append(np.repeat(np.arange(row0, row0 + nq), nm))
                base = len(comp_idx) * nm
                cols.append(np.tile(np.arange(base, base + nm), nq))
                vals.append(wv.ravel())
                comp_idx.append(space.block_dofs(block, c)
                                - space.block_offset[block])
                row0 += nq
            P = sp.coo_matrix(
                (np.concatenate(vals),
                 (np.concatenate(rows), np.concatenate(cols))),
                shape=(row0, len(comp_idx) * nm)).tocsc()
            dof_map = np.stack(comp_idx)  # (ncells, ncomp, nm)
            self._vol[region] = (pts, P, dof_map)
        self.pD = []
        for k in mesh.faces_with_tag("dirichlet_p"):
            f, quad, sides = _face_ctx(mesh, space, k)
            chi_e = penalty_chi(mesh, space, self.material, self.spec, f, "e")
            chi_p = penalty_chi(mesh, space, self.material, self.spec, f, "p")
            self.pD.append((f, quad, sides[0], chi_e, chi_p))
        self.pN = [
            _face_ctx(mesh, space, k) for k in mesh.faces_with_tag("neumann_p")]
        self.fD = [
            _face_ctx(mesh, space, k) for k in mesh.faces_with_tag("dirichlet_f")]
        self.fN = []
        for k in mesh.faces_with_tag("neumann_f"):
            f, quad, sides = _face_ctx(mesh, space, k)
            chi_f = penalty_chi(mesh, space, self.material, self.spec, f, "f")
            self.fN.append((f, quad, sides[0], chi_f))
        self.iface = []
        if self.seg is not None:
            for seg in self.seg.segments:
                quad = face_quadrature(seg.a, seg.b, space.quad_degree)
                vp = space.basis(seg.p_cell).eval(quad.points)
                vf = space.basis(seg.f_cell).eval(quad.points)
                self.iface.append((seg, quad, vp, vf))

    def assemble(self, t):
        src = self.src
        space = self.space
        mat = self.material
        F = np.zeros(space.ndof)
        nmp, nmf = space.nm_p, space.nm_f

        def scatter(row_block, basis_block, cell, contrib):
            # contrib must have the (ncomp, nm) layout of block_dofs
            idx = (space.block_dofs(basis_block, cell)
                   - space.block_offset[basis_block]
                   + space.block_offset[row_block])
            F[idx] += contrib

        if (src.f_p is not None or src.g_p is not None) and "p" in self._vol:
            pts, P, dof_map = self._vol["p"]
            for fn, row in ((src.f_p, "V"), (src.g_p, "Z")):
                if fn is None:
                    continue
                vals = np.asarray(fn(pts, t), float)
                off = space.block_offset[row]
                for a in range(2):
                    contrib = P.T @ vals[:, a]   # (ncells * nm,)
                    F[dof_map[:, a, :].ravel() + off] += contrib
        if src.F_f is not None and "f" in self._vol:
            pts, P, dof_map = self._vol["f"]
            ff = np.asarray(src.F_f(pts, t), float)
            off = space.block_offset["S"]
            for it, (al, be) in enumerate(TCOMP):
                contrib = P.T @ ff[:, al, be]
                F[dof_map[:, it, :].ravel() + off] += contrib

        # weak Dirichlet data on the p-side
        if src.u_D is not None or src.wn_D is not None:
            for f, quad, (cell, vals, grads), chi_e, chi_p in self.pD:
                n = f.normal
                w = quad.weights
                uD = (np.asarray(src.u_D(quad.points, t), float)
                      if src.u_D is not None else np.zeros((len(w), 2)))
                wn = (np.asarray(src.wn_D(quad.points, t, n), float)
                      if src.wn_D is not None else np.zeros(len(w)))
                flux = _elastic_flux(grads, n, mat.lam, mat.mu)
                wu = w[:, None] * uD
                lift_u = np.empty((2, nmp))
                for a in range(2):
                    lift_u[a] = (-np.einsum("qc,qcm->m", wu, flux[:, :, a, :])
                                 + chi_e * (w * uD[:, a]) @ vals)
                scatter("V", "U", cell, lift_u)
                q = mat.beta * (uD @ n) + wn
                wq = w * q
                lift_q = np.empty((2, nmp))
                for a in range(2):
                    lift_q[a] = (-mat.m * wq @ grads[:, :, a]
                                 + chi_p * n[a] * wq @ vals)
                scatter("Z", "U", cell, lift_q)
                scatter("V", "U", cell, mat.beta * lift_q)

        # natural data on the p-Neumann boundary
        if src.g_pN is not None or src.q_pN is not None:
            for f, quad, sides in self.pN:
                cell, vals, _ = sides[0]
                w = quad.weights
                if src.g_pN is not None:
                    gN = np.asarray(src.g_pN(quad.points, t, f.normal), float)
                    scatter("V", "U", cell, ((w[:, None] * vals).T @ gN).T)
                if src.q_pN is not None:
                    qN = np.asarray(src.q_pN(quad.points, t), float)
                    contrib = np.empty((2, nmp))
                    for a in range(2):
                        contrib[a] = -f.normal[a] * (w * qN) @ vals
                    scatter("Z", "U", cell, contrib)

        # velocity-type data on the f-Dirichlet boundary: + <G_fD, tau n_f>
        if src.G_fD is not None:
            for f, quad, sides in self.fD:
                cell, vals, _ = sides[0]
                w = quad.weights
                g = np.asarray(src.G_fD(quad.points, t), float)
                contrib = np.empty((4, nmf))
                for it, (al, be) in enumerate(TCOMP):
                    contrib[it] = f.normal[be] * (w * g[:, al]) @ vals
                scatter("S", "S", cell, contrib)

        # time-integrated traction data on the f-Neumann boundary
        if src.Sn_fN is not None:
            for f, quad, (cell, vals, grads), chi_f in self.fN:
                w = quad.weights
                g = np.asarray(src.Sn_fN(quad.points, t, f.normal), float)
                contrib = np.empty((4, nmf))
                for it, (al, be) in enumerate(TCOMP):
                    contrib[it] = (-(w * g[:, al]) @ grads[:, :, be] / mat.rho_f
                                   + chi_f * f.normal[be] * (w * g[:, al]) @ vals)
                scatter("S", "S", cell, contrib)

        # interface terms
        if self.iface:
            n = self.seg.normal
            tv = self.seg.tangent
            for seg, quad, vp, vf in self.iface:
                w = quad.weights
                pts = quad.points
                if src.H_I is not None:
                    # - <H, tau n_f> = + <H, tau n_p>
                    H = np.asarray(src.H_I(pts, t), float)
                    contrib = np.empty((4, nmf))
                    for it, (al, be) in enumerate(TCOMP):
                        contrib[it] = n[be] * (w * H[:, al]) @ vf
                    scatter("S", "S", seg.f_cell, contrib)
                if src.fI1 is not None:
                    v = w * np.asarray(src.fI1(pts, t), float)
                    contrib = np.empty((4, nmf))
                    for it, (al, be) in enumerate(TCOMP):
                        contrib[it] = -n[al] * n[be] * (v @ vf)
                    scatter("S", "S", seg.f_cell, contrib)
                if src.fI5 is not None:
                    v = w * np.asarray(src.fI5(pts, t), float) / mat.delta
                    contrib = np.empty((4, nmf))
                    for it, (al, be) in enumerate(TCOMP):
                        contrib[it] = -tv[al] * n[be] * (v @ vf)
                    scatter("S", "S", seg.f_cell, contrib)
                if src.fI2 is not None:
                    v = w * np.asarray(src.fI2(pts, t), float)
                    contrib = np.empty((2, nmp))
                    for a in range(2):
                        contrib[a] = -n[a] * (v @ vp)
                    scatter("Z", "U", seg.p_cell, contrib)
                if src.fI3 is not None:
                    v = w * np.asarray(src.fI3(pts, t), float)
                    contrib = np.empty((2, nmp))
                    for a in range(2):
                        contrib[a] = n[a] * (v @ vp)
                    scatter("V", "U", seg.p_cell, contrib)
                if src.fI4 is not None:
                    v = w * np.asarray(src.fI4(pts, t), float)
                    contrib = np.empty((2, nmp))
                    for a in range(2):
                        contrib[a] = tv[a] * (v @ vp)
                    scatter("V", "U", seg.p_cell, contrib)
        return F

    def assemble_volume_form(self, t):
        """Fluid load via the integrated-by-parts volume expression.

        Requires homogeneous fluid Dirichlet data (g_f^D = 0), i.e.
        ``H_I`` also valid on that boundary.  The per-cell integration by
        parts leaves jump terms on interior and Neumann f-faces; with
        those included the result equals the boundary-form load exactly.
        """
        src = self.src
        space = self.space
        F = np.zeros(space.ndof)
        nmf = space.nm_f
        if src.H_I is None:
            return F

        for cell, quad, vals in self.f_cells:
            w = quad.weights
            H = np.asarray(src.H_I(quad.points, t), float)
            _, grads = space.cell_values(cell)
            contrib = np.empty((4, nmf))
            for it, (al, be) in enumerate(TCOMP):
                contrib[it] = -(w * H[:, al]) @ grads[:, :, be]
            F[space.block_dofs("S", cell)] += contrib
        for k in self.mesh.faces_with_tag("interior_f", "neumann_f"):
            f, quad, sides = _face_ctx(self.mesh, space, k)
            w = quad.weights
            H = np.asarray(src.H_I(quad.points, t), float)
            signs = (1.0, -1.0)
            for i, (cell, vals, _) in enumerate(sides):
                contrib = np.empty((4, nmf))
                for it, (al, be) in enumerate(TCOMP):
                    contrib[it] = signs[i] * f.normal[be] * (w * H[:, al]) @ vals
                F[space.block_dofs("S", cell)] += contrib
        return F


def assemble_load(mesh, space, material, spec, sources, t, segmentation=None):
    """One-shot load assembly; build a LoadAssembler for repeated use."""
    return LoadAssembler(mesh, space, material, spec, sources,
                         segmentation).assemble(t)
