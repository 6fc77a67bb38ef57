"""Recovery of physical fields from the state and export to VTK/CSV.

The fluid velocity comes from the integrated momentum balance,
u_f = rho_f^{-1} div Sigma + (forcing history), and the fluid pressure
from the stress rate, p_f = -tr(dSigma/dt)/2; the stress rate uses a
first-order backward difference of two consecutive states unless an
exact rate is supplied.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .assembly import TCOMP
from .mesh import build_interface_segmentation
from .space import face_quadrature


@dataclass
class FieldSnapshot:
    """Per-cell polynomial coefficients of recovered and raw fields.

    Vector fields store (2, nm) blocks, scalars (nm,); fluid fields are
    defined on f-cells only, the poroelastic ones on p-cells.
    """

    t: float
    fields: dict = field(default_factory=dict)

    def names(self):
        return sorted(self.fields)


def _project_pointwise(space, cell, values):
    """Coefficients of the L2 projection of point values at cell quads."""
    quad = space.cell_quads[cell]
    vals = space.basis(cell).eval(quad.points)
    v = np.asarray(values, float)
    if v.ndim == 1:
        return (vals * quad.weights[:, None]).T @ v
    return ((vals * quad.weights[:, None]).T @ v).T  # (ncomp, nm)


def recover_fluid(space, material, state, prev_state=None, H_fn=None,
                  exact_rate=None):
    """Cellwise u_f and p_f coefficients from the stress block.

    ``prev_state`` enables the backward-difference stress rate; at the
    initial step pass ``exact_rate(pts, t) -> (n, 2, 2)`` instead.
    """
    mesh = space.mesh
    if exact_rate is None:
        if prev_state is None:
            raise ValueError("need prev_state (backward difference) or "
                             "exact_rate for the stress rate")
        dt = state.t - prev_state.t
        if dt <= 0:
            raise ValueError("states must be consecutive in time")
    u_f, p_f = {}, {}
    for cell in mesh.f_cells:
        quad = space.cell_quads[cell]
        _, grads = space.cell_values(cell)
        coef = state.x[space.block_dofs("S", cell)]
        div_S = np.zeros((len(quad.points), 2))
        for it, (a, b) in enumerate(TCOMP):
            div_S[:, a] += grads[:, :, b] @ coef[it]
        vals = div_S / material.rho_f
        if H_fn is not None:
            vals = vals + np.asarray(H_fn(quad.points, state.t), float)
        u_f[cell] = _project_pointwise(space, cell, vals)
        if exact_rate is not None:
            St = np.asarray(exact_rate(quad.points, state.t), float)
            p_f[cell] = _project_pointwise(
                space, cell, -0.5 * (St[:, 0, 0] + St[:, 1, 1]))
        else:
            rate = (coef - prev_state.x[space.block_dofs("S", cell)]) / dt
            p_f[cell] = -0.5 * (rate[0] + rate[3])
    return u_f, p_f


def recover_poro_pressure(space, material, state):
    """Cellwise p_p = -m (beta div u + div w) coefficients."""
    mesh = space.mesh
    p_p = {}
    for cell in mesh.p_cells:
        quad = space.cell_quads[cell]
        _, grads = space.cell_values(cell)
        div_u = np.zeros(len(quad.points))
        div_w = np.zeros(len(quad.points))
        for c in range(2):
            div_u += grads[:, :, c] @ state.x[space.block_dofs("U", cell)][c]
            div_w += grads[:, :, c] @ state.x[space.block_dofs("W", cell)][c]
        p_p[cell] = _project_pointwise(
            space, cell, material.pore_pressure(div_u, div_w))
    return p_p


def make_snapshot(space, material, state, prev_state=None, H_fn=None,
                  exact_rate=None):
    """Bundle recovered and raw per-cell fields at the state's time."""
    mesh = space.mesh
    snap = FieldSnapshot(state.t)
    u_f, p_f = recover_fluid(space, material, state, prev_state, H_fn,
                             exact_rate)
    snap.fields["u_f"] = u_f
    snap.fields["p_f"] = p_f
    snap.fields["p_p"] = recover_poro_pressure(space, material, state)
    for name, block in (("u_p", "U"), ("w_p", "W"),
                        ("du_p", "V"), ("dw_p", "Z")):
        snap.fields[name] = {c: state.x[space.block_dofs(block, c)].copy()
                             for c in mesh.p_cells}
    snap.fields["Sigma_f"] = {c: state.x[space.block_dofs("S", c)].copy()
                              for c in mesh.f_cells}
    return snap


# ---------------------------------------------------------------------------
# evaluation helpers
# ---------------------------------------------------------------------------

def _eval_coeffs(space, cell, coef, pts):
    vals = space.basis(cell).eval(pts)
    if coef.ndim == 1:
        return vals @ coef
    return vals @ coef.T  # (npts, ncomp)


def _cell_average(space, mesh, cell, coef):
    # mode 0 is 1/sqrt(|K|), so the average is coef_0 / sqrt(|K|)
    area = mesh.cell_area[cell]
    c0 = coef[..., 0]
    return c0 / np.sqrt(area)


# ---------------------------------------------------------------------------
# exporters
# ---------------------------------------------------------------------------

def export_vtk(mesh, space, snapshot, path):
    """Legacy ASCII unstructured-grid file with cell and point data."""
    lines = ["# vtk DataFile Version 3.0",
             f"polydg snapshot t={snapshot.t}",
             "ASCII", "DATASET UNSTRUCTURED_GRID"]
    nv = len(mesh.vertices)
    lines.append(f"POINTS {nv} double")
    for x, y in mesh.vertices:
        lines.append(f"{x:.10g} {y:.10g} 0.0")
    nc = mesh.n_cells
    total = sum(len(c) + 1 for c in mesh.cells)
    lines.append(f"CELLS {nc} {total}")
    for cell in mesh.cells:
        lines.append(" ".join([str(len(cell))] + [str(v) for v in cell]))
    lines.append(f"CELL_TYPES {nc}")
    lines.extend(["7"] * nc)   # VTK_POLYGON

    lines.append(f"CELL_DATA {nc}")
    lines.append("SCALARS region int 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend("0" if r == "p" else "1" for r in mesh.cell_region)
    for name in snapshot.names():
        data = snapshot.fields[name]
        sample = next(iter(data.values()))
        if sample.ndim == 1:
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            for c in range(nc):
                v = (_cell_average(space, mesh, c, data[c])
                     if c in data else 0.0)
                lines.append(f"{v:.10g}")
        else:
            ncomp = sample.shape[0]
            kind = "VECTORS" if ncomp == 2 else "TENSORS"
            if ncomp == 2:
                lines.append(f"VECTORS {name} double")
                for c in range(nc):
                    v = (_cell_average(space, mesh, c, data[c])
                         if c in data else np.zeros(2))
                    lines.append(f"{v[0]:.10g} {v[1]:.10g} 0.0")
            else:   # 4-component stress, written as full 3x3 tensors
                lines.append(f"TENSORS {name} double")
                for c in range(nc):
                    v = (_cell_average(space, mesh, c, data[c])
                         if c in data else np.zeros(4))
                    lines.append(f"{v[0]:.10g} {v[1]:.10g} 0.0")
                    lines.append(f"{v[2]:.10g} {v[3]:.10g} 0.0")
                    lines.append("0.0 0.0 0.0")

    # vertex-sampled point data, averaged over adjacent cells with the field
    vert_cells = [[] for _ in range(nv)]
    for c, loop in enumerate(mesh.cells):
        for v in loop:
            vert_cells[v].append(c)
    lines.append(f"POINT_DATA {nv}")
    for name in snapshot.names():
        data = snapshot.fields[name]
        sample = next(iter(data.values()))
        if sample.ndim == 1:
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
        elif sample.shape[0] == 2:
            lines.append(f"VECTORS {name} double")
        else:
            continue
        for v in range(nv):
            vals = [
                _eval_coeffs(space, c, data[c], mesh.vertices[v:v + 1])[0]
                for c in vert_cells[v] if c in data]
            if not vals:
                avg = np.zeros(2) if sample.ndim > 1 else 0.0
            else:
                avg = np.mean(vals, axis=0)
            if sample.ndim == 1:
                lines.append(f"{avg:.10g}")
            else:
                lines.append(f"{avg[0]:.10g} {avg[1]:.10g} 0.0")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def export_csv_profiles(mesh, space, snapshot, lines_spec, path,
                        n_samples=100):
    """Sample snapshot fields along straight lines into one CSV.

    ``lines_spec`` is a list of (label, (x0, y0), (x1, y1)); sample
    points falling outside the field's region are written as empty.
    """
    fieldnames = ["line", "s", "x", "y"] + list(snapshot.names())
    rows = []
    for label, a, b in lines_spec:
        a = np.asarray(a, float)
        b = np.asarray(b, float)
        ss = np.linspace(0.0, 1.0, n_samples)
        for s in ss:
            pt = a + s * (b - a)
            cell = _locate_cell(mesh, pt)
            row = {"line": label, "s": s * np.linalg.norm(b - a),
                   "x": pt[0], "y": pt[1]}
            for name in snapshot.names():
                data = snapshot.fields[name]
                if cell is not None and cell in data:
                    v = _eval_coeffs(space, cell, data[cell], pt[None, :])[0]
                    row[name] = (float(v) if np.ndim(v) == 0
                                 else "|".join(f"{c:.8g}" for c in v))
                else:
                    row[name] = ""
            rows.append(row)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def _locate_cell(mesh, pt):
    for c in range(mesh.n_cells):
        if _point_in_polygon(mesh.cell_points(c), pt):
            return c
    return None


def _point_in_polygon(poly, pt, tol=1e-12):
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        cr = (b[0] - a[0]) * (pt[1] - a[1]) - (b[1] - a[1]) * (pt[0] - a[0])
        if cr < -tol:
            return False
    return True


# ---------------------------------------------------------------------------
# interface flux continuity
# ---------------------------------------------------------------------------

def interface_flux_profile(space, material, state, H_fn=None,
                           segmentation=None, n_per_segment=4):
    """Sampled (alpha du_p + dw_p).n_p and u_f.n_p along the interface.

    Returns (s, flux_poro, flux_fluid) arrays; the fluid velocity is
    recovered from the stress divergence plus the forcing history.
    """
    mesh = space.mesh
    if segmentation is None:
        segmentation = build_interface_segmentation(mesh)
    n = segmentation.normal
    al = material.alpha
    ss, fp, ff = [], [], []
    for seg in segmentation.segments:
        quad = face_quadrature(seg.a, seg.b, 2 * n_per_segment - 1)
        pts = quad.points
        vals_p = space.basis(seg.p_cell).eval(pts)
        V = vals_p @ state.x[space.block_dofs("V", seg.p_cell)].T
        Z = vals_p @ state.x[space.block_dofs("Z", seg.p_cell)].T
        _, grads = space.basis(seg.f_cell).eval_grad(pts)
        coef = state.x[space.block_dofs("S", seg.f_cell)]
        div_S = np.zeros((len(pts), 2))
        for it, (a, b) in enumerate(TCOMP):
            div_S[:, a] += grads[:, :, b] @ coef[it]
        uf = div_S / material.rho_f
        if H_fn is not None:
            uf = uf + np.asarray(H_fn(pts, state.t), float)
        d = (seg.b - seg.a)
        t0 = seg.s0
        for q in range(len(pts)):
            ss.append(t0 + np.dot(pts[q] - seg.a, d) / np.linalg.norm(d))
            fp.append((al * V[q] + Z[q]) @ n)
            ff.append(uf[q] @ n)
    order = np.argsort(ss)
    return (np.asarray(ss)[order], np.asarray(fp)[order],
            np.asarray(ff)[order])


def interface_flux_mismatch(space, material, state, prev_state=None,
                            H_fn=None, segmentation=None):
    """L2(Gamma_I) norm of (alpha du_p + dw_p).n_p - u_f.n_p."""
    mesh = space.mesh
    if segmentation is None:
        segmentation = build_interface_segmentation(mesh)
    n = segmentation.normal
    al = material.alpha
    total = 0.0
    for seg in segmentation.segments:
        quad = face_quadrature(seg.a, seg.b, space.quad_degree)
        pts = quad.points
        vals_p = space.basis(seg.p_cell).eval(pts)
        V = vals_p @ state.x[space.block_dofs("V", seg.p_cell)].T
        Z = vals_p @ state.x[space.block_dofs("Z", seg.p_cell)].T
        _, grads = space.basis(seg.f_cell).eval_grad(pts)
        coef = state.x[space.block_dofs("S", seg.f_cell)]
        div_S = np.zeros((len(pts), 2))
        for it, (a, b) in enumerate(TCOMP):
            div_S[:, a] += grads[:, :, b] @ coef[it]
        uf = div_S / material.rho_f
        if H_fn is not None:
            uf = uf + np.asarray(H_fn(pts, state.t), float)
        diff = (al * V + Z - uf) @ n
        total += quad.weights @ diff ** 2
    return float(np.sqrt(total))


def neighbor_jump_range(mesh, space, field_coeffs):
    """Max cell-to-neighbour jump of cell averages vs the global range.

    Used as a checkerboard-oscillation indicator for a scalar cellwise
    field (e.g. the recovered pore pressure).
    """
    avg = {}
    for cell, coef in field_coeffs.items():
        avg[cell] = _cell_average(space, mesh, cell, coef)
    vals = np.array(list(avg.values()))
    rng = vals.max() - vals.min()
    max_jump = 0.0
    for f in mesh.faces:
        if len(f.cells) == 2:
            c0, c1 = f.cells
            if c0 in avg and c1 in avg:
                max_jump = max(max_jump, abs(avg[c0] - avg[c1]))
    return max_jump, rng
