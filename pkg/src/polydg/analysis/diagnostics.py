"""Spectral and structural diagnostics: symmetry/PD checks, discrete
inf-sup estimate of the weak-symmetry pairing, energy monitors and the
trace-inverse sanity constant."""

from __future__ import annotations

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from ..assembly import (PenaltySpec, assemble_fluid, fluid_div_gram,
                        fluid_interface_trace_gram, fluid_jump_gram)
from ..mesh import build_interface_segmentation
from ..space import DgSpace, face_quadrature
from .norms import energy_error

DENSE_GUARD = 5000


def _sym_residual(M):
    scale = max(abs(M).max(), 1e-300)
    return float(abs(M - M.T).max() / scale)


def matrix_diagnostics(system, dense_limit=DENSE_GUARD):
    """Symmetry residuals, definiteness flags and coupling-transpose check."""
    b = system.blocks
    space = system.space
    report = {"symmetry": {}, "pd": {}, "coupling_transpose": None}
    for name in ("Ae", "Bp", "Af", "Mf", "Df_delta", "Dp_gamma", "Dp_visc",
                 "Mp_rho", "Mp_rhof", "Mp_rhow"):
        report["symmetry"][name] = _sym_residual(b[name])

    report["pd"]["density_block"] = system.material.density_block_pd()
    nP = space.block_size["U"]
    if nP <= dense_limit:
        for name in ("Ae",):
            try:
                la.cholesky(b[name].toarray(), lower=True)
                report["pd"][name] = True
            except la.LinAlgError:
                report["pd"][name] = False
        for name in ("Bp", "Af"):
            mat = b[name].toarray()
            ev_min = la.eigvalsh(mat)[0]
            report["pd"][name + "_psd"] = bool(
                ev_min > -1e-10 * max(abs(mat).max(), 1.0))
    # coupling blocks: M rows 3-4 must hold the negative transposes of the
    # blocks sitting in A row 5
    M, A = system.M, system.A
    offV = space.block_offset["V"]
    offZ = space.block_offset["Z"]
    sS = space.block_slice("S")
    rV = slice(offV, offV + nP)
    rZ = slice(offZ, offZ + nP)
    d1 = abs(M[rV, sS] + A[sS, rV].T).max()
    d2 = abs(M[rZ, sS] + A[sS, rZ].T).max()
    scale = max(abs(A[sS, rV]).max(), abs(A[sS, rZ]).max(), 1.0)
    report["coupling_transpose"] = float(max(d1, d2) / scale)
    return report


def make_energy_monitor(system, spec=None, full_norm=False):
    """Per-state energy record for time runs.

    Always reports the dissipated quadratic functional; with
    ``full_norm`` also the (more expensive) energy-norm pieces.
    """
    spec = spec or system.spec

    def monitor(state):
        rec = {"t": state.t, "E_lyap": system.lyapunov_energy(state.x)}
        if full_norm:
            res = energy_error(system.space, system.material, spec,
                               x=state.x, case=None,
                               segmentation=system.segmentation)
            rec.update({"Ep": res["Ep"], "Ef": res["Ef"], "E": res["E"]})
        return rec

    return monitor


def weak_symmetry_residuals(system, states):
    """max |B^{fT} S_f| / max |S_f| per recorded state."""
    Bf = system.blocks["Bf"]
    sS = system.space.block_slice("S")
    out = []
    for st in states:
        s = st.x[sS]
        denom = max(abs(s).max(), 1e-300)
        out.append(float(abs(Bf.T @ s).max() / denom))
    return out


def infsup_estimate(mesh, deg_f=2, material=None, spec=None,
                    dense_limit=DENSE_GUARD):
    """Discrete inf-sup constant of the rotation/stress pairing.

    beta_h is the smallest generalized singular value of B^f measured
    between the L2 norm of the multiplier block (identity Gram for the
    orthonormal basis) and the fluid energy norm augmented by the
    interface trace term; dense eigensolve, small meshes only.
    """
    from ..material import material_preset
    material = material or material_preset("test1")
    spec = spec or PenaltySpec()
    space = DgSpace(mesh, deg_f, deg_f)
    nS = space.block_size["S"]
    if nS > dense_limit:
        raise ValueError(
            f"stress block has {nS} dofs > {dense_limit}; the dense "
            "inf-sup estimate is meant for small meshes only")
    seg = build_interface_segmentation(mesh) if mesh.interface_faces else None
    fl = assemble_fluid(mesh, space, material, spec, seg)
    X = (fl["Mf"] + fluid_div_gram(mesh, space, material)
         + fluid_jump_gram(mesh, space, material, spec)
         + fl["Df_delta"]
         + fluid_interface_trace_gram(mesh, space, material, spec, seg))
    B = fl["Bf"].toarray()
    lu = spla.splu(X.tocsc())
    Y = lu.solve(B)
    K = B.T @ Y
    ev = la.eigvalsh(0.5 * (K + K.T))
    return float(np.sqrt(max(ev[0], 0.0)))


def trace_inverse_report(mesh, space):
    """Observed constants c in ||v||_bdK <= c p h^{-1/2} ||v||_K per cell.

    Exact per cell: the square root of the largest eigenvalue of the
    boundary mass matrix of the orthonormal modes, scaled by p h^{-1/2}.
    """
    consts = np.zeros(mesh.n_cells)
    for cell in range(mesh.n_cells):
        basis = space.basis(cell)
        pts = mesh.cell_points(cell)
        nvert = len(pts)
        G = np.zeros((basis.nm, basis.nm))
        for k in range(nvert):
            quad = face_quadrature(pts[k], pts[(k + 1) % nvert],
                                   space.quad_degree)
            vals = basis.eval(quad.points)
            G += vals.T @ (quad.weights[:, None] * vals)
        lam_max = la.eigvalsh(G)[-1]
        deg = basis.degree
        consts[cell] = np.sqrt(lam_max * mesh.cell_diameter[cell]) / deg
    return {"per_cell": consts, "max": float(consts.max()),
            "min": float(consts.min())}
