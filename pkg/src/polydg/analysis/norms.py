"""Energy and dG norms of discrete states and errors against exact fields.

Everything is evaluated pointwise at cell/face quadrature nodes, so the
same code measures a state's norm (exact = 0), an exact field's norm
(state = 0), or the error between them.  The face sets and penalty
weights match the assembled forms.
"""

from __future__ import annotations

import numpy as np

from ..assembly import penalty_chi, _face_ctx, TCOMP
from ..mesh import build_interface_segmentation
from ..space import face_quadrature, dev2


def _zeros2(pts, t):
    return np.zeros((len(pts), 2))


def _zeros1(pts, t):
    return np.zeros(len(pts))


def _zeros22(pts, t):
    return np.zeros((len(pts), 2, 2))


class _ExactView:
    """Field callables of a ManufacturedCase, or zeros when absent."""

    def __init__(self, case):
        z2, z1, z22 = _zeros2, _zeros1, _zeros22
        self.u = case.u if case else z2
        self.w = case.w if case else z2
        self.u_t = case.u_t if case else z2
        self.w_t = case.w_t if case else z2
        self.grad_u = case.grad_u if case else z22
        self.grad_w = case.grad_w if case else z22
        self.div_u = case.div_u if case else z1
        self.div_w = case.div_w if case else z1
        self.Sigma = case.Sigma if case else z22
        self.div_Sigma = case.div_Sigma if case else z2
        self.r_f = case.r_f if case else z1


class _StateView:
    """Evaluates the discrete blocks of x at points, or zeros if x is None."""

    def __init__(self, space, x):
        self.space = space
        self.x = x

    def vec(self, block, cell, vals):
        if self.x is None:
            return np.zeros((len(vals), 2))
        coef = self.x[self.space.block_dofs(block, cell)]
        return vals @ coef.T

    def vec_grad(self, block, cell, grads):
        if self.x is None:
            return np.zeros((grads.shape[0], 2, 2))
        coef = self.x[self.space.block_dofs(block, cell)]
        return np.einsum("pmd,cm->pcd", grads, coef)

    def tens(self, cell, vals):
        if self.x is None:
            return np.zeros((len(vals), 2, 2))
        coef = self.x[self.space.block_dofs("S", cell)]
        out = np.empty((len(vals), 2, 2))
        for it, (a, b) in enumerate(TCOMP):
            out[:, a, b] = vals @ coef[it]
        return out

    def tens_div(self, cell, grads):
        if self.x is None:
            return np.zeros((grads.shape[0], 2))
        coef = self.x[self.space.block_dofs("S", cell)]
        out = np.zeros((grads.shape[0], 2))
        for it, (a, b) in enumerate(TCOMP):
            out[:, a] += grads[:, :, b] @ coef[it]
        return out

    def scal(self, block, cell, vals):
        if self.x is None:
            return np.zeros(len(vals))
        coef = self.x[self.space.block_dofs(block, cell)]
        return vals @ coef[0]


def energy_error(space, material, spec, x=None, case=None, t=0.0,
                 segmentation=None):
    """Squared-term breakdown of the energy norms of (exact - state).

    Returns a dict of named components together with the combined
    quantities ``Ep``, ``Ef``, ``E`` and the multiplier error ``r`` (all
    un-squared).  With ``case=None`` this is the energy norm of the
    state; with ``x=None`` the norm of the exact solution.
    """
    mesh = space.mesh
    mat = material
    ex = _ExactView(case)
    st = _StateView(space, x)
    if segmentation is None and mesh.interface_faces:
        segmentation = build_interface_segmentation(mesh)

    acc = {k: 0.0 for k in
           ("ut", "wt", "w_eta", "gamma_I", "eps", "jump_e", "divbw",
            "jump_p", "dev", "div_f", "jump_f", "delta_I", "r")}

    # p-region volume terms
    for cell in mesh.p_cells:
        quad = space.cell_quads[cell]
        w = quad.weights
        pts = quad.points
        vals, grads = space.cell_values(cell)
        e_ut = ex.u_t(pts, t) - st.vec("V", cell, vals)
        e_wt = ex.w_t(pts, t) - st.vec("Z", cell, vals)
        e_w = ex.w(pts, t) - st.vec("W", cell, vals)
        acc["ut"] += w @ np.sum(e_ut ** 2, 1)
        acc["wt"] += w @ np.sum(e_wt ** 2, 1)
        acc["w_eta"] += mat.eta_over_kappa * (w @ np.sum(e_w ** 2, 1))
        g_eu = ex.grad_u(pts, t) - st.vec_grad("U", cell, grads)
        eps = 0.5 * (g_eu + np.swapaxes(g_eu, -1, -2))
        tre = eps[:, 0, 0] + eps[:, 1, 1]
        acc["eps"] += w @ (2.0 * mat.mu * np.sum(eps ** 2, (1, 2))
                           + mat.lam * tre ** 2)
        div_e = (mat.beta * (ex.div_u(pts, t)) + ex.div_w(pts, t)
                 - mat.beta * np.trace(st.vec_grad("U", cell, grads),
                                       axis1=1, axis2=2)
                 - np.trace(st.vec_grad("W", cell, grads), axis1=1, axis2=2))
        acc["divbw"] += mat.m * (w @ div_e ** 2)

    # p-face jumps (interior and Dirichlet)
    for k in mesh.faces_with_tag("interior_p", "dirichlet_p"):
        f, quad, sides = _face_ctx(mesh, space, k)
        w = quad.weights
        pts = quad.points
        chi_e = penalty_chi(mesh, space, mat, spec, f, "e")
        chi_p = penalty_chi(mesh, space, mat, spec, f, "p")
        traces_u, traces_bw = [], []
        for cell, vals, _ in sides:
            traces_u.append(ex.u(pts, t) - st.vec("U", cell, vals))
            traces_bw.append(
                mat.beta * (ex.u(pts, t) - st.vec("U", cell, vals))
                + ex.w(pts, t) - st.vec("W", cell, vals))
        if f.is_boundary:
            ju = traces_u[0]
            jn = traces_bw[0] @ f.normal
        else:
            ju = traces_u[0] - traces_u[1]
            jn = (traces_bw[0] - traces_bw[1]) @ f.normal
        # |[u]|^2 = |u+ (x) n+ + u- (x) n-|^2 = |du|^2 for shared n
        acc["jump_e"] += chi_e * (w @ np.sum(ju ** 2, 1))
        acc["jump_p"] += chi_p * (w @ jn ** 2)

    # f-region volume terms
    for cell in mesh.f_cells:
        quad = space.cell_quads[cell]
        w = quad.weights
        pts = quad.points
        vals, grads = space.cell_values(cell)
        e_S = ex.Sigma(pts, t) - st.tens(cell, vals)
        acc["dev"] += (w @ np.sum(dev2(e_S) ** 2, (1, 2))) / (2.0 * mat.mu_f)
        e_div = ex.div_Sigma(pts, t) - st.tens_div(cell, grads)
        acc["div_f"] += (w @ np.sum(e_div ** 2, 1)) / mat.rho_f
        aux_vals = space.basis(cell, aux=True).eval(pts)
        e_r = ex.r_f(pts, t) - st.scal("R", cell, aux_vals)
        acc["r"] += w @ e_r ** 2

    # f-face jumps (interior and Neumann)
    for k in mesh.faces_with_tag("interior_f", "neumann_f"):
        f, quad, sides = _face_ctx(mesh, space, k)
        w = quad.weights
        pts = quad.points
        chi_f = penalty_chi(mesh, space, mat, spec, f, "f")
        traces = [ex.Sigma(pts, t) - st.tens(cell, vals)
                  for cell, vals, _ in sides]
        jS = traces[0] if f.is_boundary else traces[0] - traces[1]
        acc["jump_f"] += chi_f * (w @ np.sum((jS @ f.normal) ** 2, 1))

    # interface terms
    if segmentation is not None:
        n = segmentation.normal
        tp = segmentation.tangent
        for seg in segmentation.segments:
            quad = face_quadrature(seg.a, seg.b, space.quad_degree)
            w = quad.weights
            pts = quad.points
            if mat.gamma > 0:
                vals_p = space.basis(seg.p_cell).eval(pts)
                e_w = ex.w(pts, t) - st.vec("W", seg.p_cell, vals_p)
                acc["gamma_I"] += mat.gamma * (w @ (e_w @ n) ** 2)
            vals_f = space.basis(seg.f_cell).eval(pts)
            e_S = ex.Sigma(pts, t) - st.tens(seg.f_cell, vals_f)
            slip = (e_S @ n) @ tp
            acc["delta_I"] += (w @ slip ** 2) / mat.delta

    ep2 = (acc["ut"] + acc["wt"] + acc["w_eta"] + acc["gamma_I"]
           + acc["eps"] + acc["jump_e"] + acc["divbw"] + acc["jump_p"])
    ef2 = acc["dev"] + acc["div_f"] + acc["jump_f"] + acc["delta_I"]
    out = dict(acc)
    out["dG_e"] = np.sqrt(acc["eps"] + acc["jump_e"])
    out["dG_p"] = np.sqrt(acc["divbw"] + acc["jump_p"])
    out["dG_f"] = np.sqrt(acc["div_f"] + acc["jump_f"])
    out["Ep"] = np.sqrt(ep2)
    out["Ef"] = np.sqrt(ef2)
    out["E"] = np.sqrt(ep2 + ef2)
    out["r"] = np.sqrt(acc["r"])
    return out


def energy_norm(space, x, material, spec, which="E", segmentation=None):
    """Energy norm of a discrete state (see ``energy_error``)."""
    res = energy_error(space, material, spec, x=x, case=None,
                       segmentation=segmentation)
    return res[which]


def error_vs_exact(space, x, case, t, spec, segmentation=None):
    """Energy errors of a state against the case's exact fields at time t."""
    if not 0.0 <= t <= case.T + 1e-12:
        raise ValueError(f"t={t} outside [0, {case.T}]")
    return energy_error(space, case.material, spec, x=x, case=case, t=t,
                        segmentation=segmentation)
