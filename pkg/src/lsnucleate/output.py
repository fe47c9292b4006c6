"""Result files: iteration history, field dumps, final interface and run metadata.

history.csv
    One row per iteration. The leading columns are fixed::

        iter,z,F,P_Per,P_Reg,P_coupling,g_mass,g_stress,rho_sh,rho_th,void_components,interface_length

    followed by ``psi_ratio,w_F,w_per,w_reg,w_coupling,w_psi,P_Per_smeared,P_tau,
    strain_energy,mass_fraction``. Floats are written with ``repr`` so that
    ``z == w_F*F + w_per*P_Per + w_reg*P_Reg + w_coupling*P_coupling + w_psi*psi_ratio``
    can be recomputed from a row. ``g_stress`` is empty without a stress bound.

fields_NNNNN.vtk
    Legacy ASCII VTK, STRUCTURED_POINTS, one point per grid node in the
    grid's x-fastest order, with scalars phi, rho, rho_tilde, tau, u_mag.

final_interface.csv
    ``x0,y0,x1,y1`` per zero-isocontour segment of the final design.

run.json
    Resolved configuration, Psi0, termination status and package version.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .solve import von_mises_and_smooth

HISTORY_COLUMNS = [
    "iter", "z", "F", "P_Per", "P_Reg", "P_coupling", "g_mass", "g_stress", "rho_sh", "rho_th",
    "void_components", "interface_length",
]
EXTRA_COLUMNS = [
    "psi_ratio", "w_F", "w_per", "w_reg", "w_coupling", "w_psi", "P_Per_smeared", "P_tau",
    "strain_energy", "mass_fraction",
]
VTK_FIELDS = ("phi", "rho", "rho_tilde", "tau", "u_mag")


class OutputError(OSError):
    pass


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def history_row(bd) -> list[str]:
    w = bd.w
    vals = [bd.it, bd.z, bd.F, bd.P_Per, bd.P_Reg, bd.P_coupling, bd.g_mass, bd.g_stress,
            bd.rho_sh, bd.rho_th, bd.void_components, bd.interface_length,
            bd.psi_ratio, w["F"], w["per"], w["reg"], w["coupling"], w["psi"],
            bd.P_Per_smeared, bd.P_tau, bd.strain_energy, bd.mass_fraction]
    return [_fmt(v) for v in vals]


def _open(path, mode="w"):
    try:
        return open(path, mode, newline="", encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from exc


def write_history(breakdowns, path) -> None:
    with _open(path) as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(HISTORY_COLUMNS + EXTRA_COLUMNS)
        for bd in breakdowns:
            wr.writerow(history_row(bd))


def read_history(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def nodal_fields(ev, grid, nu) -> dict:
    f = ev.fields
    tau = ev.tau
    if tau is None:
        _, tau = von_mises_and_smooth(ev.solution, grid, nu)
    u = ev.solution.u.reshape(-1, 2)
    return {"phi": f.phi, "rho": f.rho, "rho_tilde": f.rho_tilde, "tau": tau,
            "u_mag": np.linalg.norm(u, axis=1)}


def write_vtk(grid, data: dict, path, title="lsnucleate fields") -> None:
    n = grid.node_count
    with _open(path) as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title + "\n")
        fh.write("ASCII\nDATASET STRUCTURED_POINTS\n")
        fh.write(f"DIMENSIONS {grid.nx + 1} {grid.ny + 1} 1\n")
        fh.write(f"ORIGIN {_fmt(grid.origin[0])} {_fmt(grid.origin[1])} 0.0\n")
        fh.write(f"SPACING {_fmt(grid.h)} {_fmt(grid.h)} 1.0\n")
        fh.write(f"POINT_DATA {n}\n")
        for name in VTK_FIELDS:
            vals = np.asarray(data[name], dtype=float)
            if vals.shape != (n,):
                raise OutputError(f"field {name} has shape {vals.shape}, expected ({n},)")
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(_fmt(v) for v in vals))
            fh.write("\n")


def read_vtk(path) -> tuple[tuple[int, int, int], dict]:
    """Minimal reader for the files written above (used by tests and tooling)."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    dims = None
    data = {}
    i = 0
    while i < len(lines):
        tok = lines[i].split()
        if tok and tok[0] == "DIMENSIONS":
            dims = tuple(int(t) for t in tok[1:4])
        elif tok and tok[0] == "POINT_DATA":
            npts = int(tok[1])
        elif tok and tok[0] == "SCALARS":
            name = tok[1]
            vals = np.array([float(v) for v in lines[i + 2:i + 2 + npts]])
            data[name] = vals
            i += 1 + npts
        i += 1
    return dims, data


def write_interface(poly, path) -> None:
    with _open(path) as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["x0", "y0", "x1", "y1"])
        for (a, b) in poly.segments:
            wr.writerow([_fmt(a[0]), _fmt(a[1]), _fmt(b[0]), _fmt(b[1])])


def write_metadata(meta: dict, path) -> None:
    with _open(path) as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def ensure_dir(path) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {path}: {exc.strerror}") from exc
    return path
