"""Manufactured-solution runs and convergence studies."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from ..assembly import LoadAssembler, PenaltySpec, assemble_system
from ..space import DgSpace
from ..stepper import ThetaScheme, TimeStepper, n_steps_for, project_initial, run
from .norms import error_vs_exact


@dataclass
class CaseResult:
    h_p: float
    h_f: float
    ndof: int
    errors: dict
    state: object = None
    system: object = None


def solve_case(case, mesh, degree, dt=None, T=None, theta=None, spec=None,
               keep_system=False, monitor=None, sup_over_time=False):
    """Run one manufactured case to its final time and measure errors.

    Errors are evaluated at the final time by default;
    ``sup_over_time`` instead reports per-component maxima over all
    steps, at the cost of one norm sweep per step.
    """
    dt = dt if dt is not None else case.dt
    T = T if T is not None else case.T
    theta = theta if theta is not None else case.theta
    spec = spec or PenaltySpec()
    space = DgSpace(mesh, degree, degree)
    system = assemble_system(mesh, space, case.material, spec)
    loads = LoadAssembler(mesh, space, case.material, spec, case.sources(),
                          system.segmentation)
    state0 = project_initial(space, **case.initial_fields())
    scheme = ThetaScheme(theta=theta, dt=dt)
    stepper = TimeStepper(system.M, system.A, scheme, loads.assemble)
    if sup_over_time:
        per_step = []

        def err_monitor(st):
            rec = error_vs_exact(space, st.x, case, st.t, spec,
                                 system.segmentation)
            per_step.append(rec)
            if monitor is not None:
                rec = dict(rec, **monitor(st))
            return rec

        traj = run(stepper, state0, n_steps_for(T, dt), monitor=err_monitor)
        errors = {k: max(rec[k] for rec in per_step) for k in per_step[0]}
    else:
        traj = run(stepper, state0, n_steps_for(T, dt), monitor=monitor)
        errors = error_vs_exact(space, traj.final.x, case, traj.final.t,
                                spec, system.segmentation)
    return CaseResult(
        h_p=mesh.h_max("p"), h_f=mesh.h_max("f"), ndof=space.ndof,
        errors=errors,
        state=traj.final if keep_system else None,
        system=system if keep_system else None)


def eoc(err_coarse, err_fine, h_coarse, h_fine):
    """Experimental order of convergence between two mesh levels."""
    if err_coarse <= 0 or err_fine <= 0:
        return float("nan")
    return math.log(err_coarse / err_fine) / math.log(h_coarse / h_fine)


@dataclass
class ConvergenceTable:
    """Rows of (h, ndof, errors) with orders between consecutive rows."""

    kind: str                      # "h" or "p"
    labels: list = field(default_factory=lambda: ["Ep", "Ef", "E"])
    rows: list = field(default_factory=list)

    def add(self, level, h, ndof, errors):
        self.rows.append({"level": level, "h": h, "ndof": ndof,
                          **{k: errors[k] for k in self.labels}})
        self._update_eoc()

    def _update_eoc(self):
        for i, row in enumerate(self.rows):
            for lab in self.labels:
                key = f"eoc_{lab}"
                if i == 0 or self.kind != "h":
                    row[key] = float("nan")
                else:
                    prev = self.rows[i - 1]
                    row[key] = eoc(prev[lab], row[lab], prev["h"], row["h"])

    def column(self, name):
        return [row[name] for row in self.rows]

    def write_csv(self, path):
        """CSV with columns h, ndof, err_*, eoc_* (error names prefixed)."""
        fields = list(self.rows[0].keys())
        header = [f"err_{f}" if f in self.labels else f for f in fields]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in self.rows:
                writer.writerow([row[f] for f in fields])

    def __str__(self):
        lines = []
        fields = list(self.rows[0].keys())
        lines.append("  ".join(f"{f:>10s}" for f in fields))
        for row in self.rows:
            cells = []
            for f in fields:
                v = row[f]
                cells.append(f"{v:10.3e}" if isinstance(v, float)
                             else f"{v:>10}")
            lines.append("  ".join(cells))
        return "\n".join(lines)


def _h_job(args):
    case_name, material, mesh, degree, dt, T, theta = args
    from .cases import manufactured_case
    case = manufactured_case(case_name, material)
    return solve_case(case, mesh, degree, dt, T, theta)


def run_convergence(case, meshes=None, degree=None, degrees=None, mesh=None,
                    dt=None, T=None, theta=None, spec=None, workers=1):
    """h-study over a mesh family (fixed degree) or p-study on one mesh.

    For h-studies the error is reported against the regionwise mesh size
    (max over regions, like the combined energy norm); EOC columns refer
    to consecutive rows.
    """
    if meshes is not None:
        if degree is None:
            raise ValueError("h-study needs a fixed degree")
        table = ConvergenceTable("h")
        jobs = [(case.name, case.material, m, degree, dt, T, theta)
                for m in meshes]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(_h_job, jobs))
        else:
            results = [_h_job(j) for j in jobs]
        for lvl, res in enumerate(results):
            table.add(lvl, max(res.h_p, res.h_f), res.ndof, res.errors)
        return table
    if degrees is not None:
        if mesh is None:
            raise ValueError("p-study needs a mesh")
        table = ConvergenceTable("p")
        for deg in degrees:
            res = solve_case(case, mesh, deg, dt, T, theta, spec)
            table.add(deg, max(res.h_p, res.h_f), res.ndof, res.errors)
        return table
    raise ValueError("need either meshes=... or degrees=...")
