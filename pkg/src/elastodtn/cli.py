"""Command line front end.

Three subcommands, all driven by a flat ``key = value`` config file:

``solve``
    One assembly and solve on the initial mesh; writes the field export
    and the efficiency table.
``adapt``
    The full adaptive loop; additionally writes the per-iteration
    convergence table.
``verify``
    Self-checks of the analytic identities (no config needed).

Each run copies its config into the output directory next to the CSV
tables, the VTK field export and rendered summary figures.
"""

from __future__ import annotations

import argparse
import math
import shutil
import sys
from pathlib import Path

import numpy as np

from . import adapt as adapt_mod
from .analytic import flat_exact, flat_gradient, incident
from .dtn import make_mode_grid, triangle_exp_integrals
from .mesh import (SurfaceProfile, build_mesh, bump_profile, flat_profile,
                   heightmap_profile, write_vtk)
from .solver import solve as solve_system
from .spectral import (Lattice, coeffs_from_field, efficiencies,
                       field_from_coeffs, make_incidence, make_medium, mode,
                       mode_transfer, neg_hermitian_part)

__all__ = ["main", "parse_config", "verify"]

_DEFAULTS = {
    "geometry": "flat",
    "lambda": "1.0",
    "mu": "1.0",
    "omega": "2*pi",
    "theta1": "pi/6",
    "theta2": "pi/6",
    "Lambda1": "1.0",
    "Lambda2": "1.0",
    "h": "0.3",
    "hhat": "",          # default: highest surface point
    "N": "",             # default: chosen from eps_N_target
    "eps": "0.0",
    "tau": "0.5",
    "eps_N_target": "1e-8",
    "max_dofs": "300000",
    "max_iters": "30",
    "divisions": "8,8,4",
    "bumps": "",
    "outdir": "out",
    "threads": "",
}


def _number(text: str) -> float:
    """Parse a numeric config value; ``pi`` and arithmetic are allowed."""
    allowed = set("0123456789.eE+-*/() pi")
    if not set(text) <= allowed:
        raise ValueError(f"not a numeric value: {text!r}")
    return float(eval(text, {"__builtins__": {}}, {"pi": math.pi}))


def parse_config(path) -> dict:
    """Read a flat ``key = value`` config file."""
    cfg = dict(_DEFAULTS)
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _DEFAULTS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        cfg[key] = value
    return cfg


def _profile(cfg: dict) -> SurfaceProfile:
    geometry = cfg["geometry"]
    if geometry == "flat":
        return flat_profile(0.0)
    if geometry == "bumps":
        bumps = []
        for chunk in cfg["bumps"].split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            parts = [_number(p) for p in chunk.split(",")]
            if len(parts) != 5:
                raise ValueError(
                    "each bump needs x1lo,x1hi,x2lo,x2hi,height")
            bumps.append(tuple(parts))
        if not bumps:
            raise ValueError("geometry 'bumps' requires a bumps key")
        return bump_profile(bumps)
    # anything else is a heightmap file
    return heightmap_profile(np.loadtxt(geometry))


def _setup(cfg: dict):
    medium = make_medium(_number(cfg["lambda"]), _number(cfg["mu"]),
                         _number(cfg["omega"]))
    incidence = make_incidence(medium, _number(cfg["theta1"]),
                               _number(cfg["theta2"]))
    profile = _profile(cfg)
    hhat = _number(cfg["hhat"]) if cfg["hhat"] else profile.top()
    lattice = Lattice(_number(cfg["Lambda1"]), _number(cfg["Lambda2"]),
                      _number(cfg["h"]), hhat)
    divisions = tuple(int(s) for s in cfg["divisions"].split(","))
    if len(divisions) != 3:
        raise ValueError("divisions must be three comma-separated integers")
    return medium, incidence, profile, lattice, divisions


def _pick_n_trunc(cfg, medium, incidence, profile, lattice) -> int:
    if cfg["N"]:
        return int(cfg["N"])
    return adapt_mod.choose_n_trunc(medium, incidence, lattice,
                                    profile.volume(lattice),
                                    _number(cfg["eps_N_target"]))


def _prepare_outdir(cfg: dict, config_path) -> Path:
    outdir = Path(cfg["outdir"])
    outdir.mkdir(parents=True, exist_ok=True)
    shutil.copy(config_path, outdir / "config.txt")
    return outdir


def _export_solution(outdir: Path, mesh, result, eta=None) -> None:
    vals = result.field.vertex_values()
    point_data = {"displacement_re": vals.real, "displacement_im": vals.imag}
    cell_data = {"indicator": eta} if eta is not None else None
    write_vtk(mesh, outdir / "solution.vtk", point_data=point_data,
              cell_data=cell_data)


def cmd_solve(config_path, dry_run: bool = False) -> int:
    from .report import plot_efficiencies, write_efficiencies_csv
    cfg = parse_config(config_path)
    medium, incidence, profile, lattice, divisions = _setup(cfg)
    n_trunc = _pick_n_trunc(cfg, medium, incidence, profile, lattice)
    print(f"truncation order N = {n_trunc}")
    if dry_run:
        return 0
    outdir = _prepare_outdir(cfg, config_path)
    mesh = build_mesh(profile, lattice, divisions)
    grid = make_mode_grid(medium, incidence, lattice, n_trunc)
    result = solve_system(mesh, medium, incidence, grid)
    table = efficiencies(medium, incidence, lattice, result.spectrum)
    _export_solution(outdir, mesh, result)
    write_efficiencies_csv(outdir / "efficiencies.csv", table)
    plot_efficiencies(outdir / "efficiencies.png", table)
    print(f"solved {result.n_dofs} dofs ({result.method}), "
          f"residual {result.residual:.2e}, "
          f"efficiency sum {table.total:.6f}")
    return 0


def cmd_adapt(config_path, dry_run: bool = False) -> int:
    from .report import (plot_convergence, plot_efficiencies,
                         write_convergence_csv, write_efficiencies_csv)
    cfg = parse_config(config_path)
    medium, incidence, profile, lattice, divisions = _setup(cfg)
    n_trunc = _pick_n_trunc(cfg, medium, incidence, profile, lattice)
    print(f"truncation order N = {n_trunc}")
    if dry_run:
        return 0
    outdir = _prepare_outdir(cfg, config_path)
    reference = None
    if cfg["geometry"] == "flat":
        sol = flat_exact(medium, incidence)
        reference = lambda x: flat_gradient(sol, x)  # noqa: E731

    def report_progress(mesh, solution, estimate, record):
        print(f"iter {record.iteration:2d}: {record.n_dofs:7d} dofs, "
              f"eps_h {record.eps_h:.3e}, "
              f"efficiency sum {record.efficiency_sum:.4f} "
              f"({record.wall_seconds:.1f}s)")

    result = adapt_mod.run(
        profile, medium, incidence, lattice, divisions,
        eps=_number(cfg["eps"]), tau=_number(cfg["tau"]),
        eps_n_target=_number(cfg["eps_N_target"]),
        max_dofs=int(_number(cfg["max_dofs"])),
        max_iters=int(_number(cfg["max_iters"])), n_trunc=n_trunc,
        reference_gradient=reference, callback=report_progress)
    table = efficiencies(medium, incidence, lattice,
                         result.solution.spectrum)
    write_convergence_csv(outdir / "convergence.csv", result.records)
    write_efficiencies_csv(outdir / "efficiencies.csv", table)
    plot_convergence(outdir / "convergence.png", result.records)
    plot_efficiencies(outdir / "efficiencies.png", table)
    _export_solution(outdir, result.mesh, result.solution,
                     eta=result.estimate.eta)
    return 0


def _example_modes(dtn_sign: float):
    medium = make_medium(1.0, 1.0, 2.0 * math.pi)
    incidence = make_incidence(medium, math.pi / 6, math.pi / 6)
    lattice = Lattice(1.0, 1.0, 0.3, 0.0)
    modes = []
    for n in ((0, 0), (1, 0), (-2, 1), (3, -3), (0, 4)):
        md = mode(medium, incidence, lattice, n)
        if dtn_sign != 1.0:
            md = type(md)(n=md.n, alpha_n=md.alpha_n, beta1=md.beta1,
                          beta2=md.beta2, chi=md.chi,
                          kappa1_sq=md.kappa1_sq, kappa2_sq=md.kappa2_sq,
                          dtn=dtn_sign * md.dtn,
                          propagating_p=md.propagating_p,
                          propagating_s=md.propagating_s)
        modes.append(md)
    return medium, incidence, lattice, modes


def _verify_spectral(dtn_sign: float) -> None:
    medium, incidence, lattice, modes = _example_modes(dtn_sign)
    rng = np.random.default_rng(1)
    for md in modes:
        u = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        back = field_from_coeffs(md, coeffs_from_field(md, u))
        assert np.abs(back - u).max() < 1e-10, "Helmholtz split round-trip"
        p = mode_transfer(md, lattice.height, lattice.height)
        assert np.abs(p - np.eye(3)).max() < 1e-10, "transfer identity"


def _verify_energy_structure(dtn_sign: float) -> None:
    _, _, _, modes = _example_modes(dtn_sign)
    for md in modes:
        if md.propagating_s:
            continue
        sym = neg_hermitian_part(md)
        eig = np.linalg.eigvalsh(sym)
        assert eig.min() > 0.0, \
            "negative Hermitian part of an evanescent mode must be definite"


def _verify_trace(dtn_sign: float) -> None:
    rng = np.random.default_rng(2)
    tris = rng.uniform(0.0, 1.0, (5, 3, 2))
    alphas = rng.uniform(-20.0, 20.0, (4, 2))
    got = triangle_exp_integrals(tris, alphas)
    from .quadrature import triangle_rule
    pts, wts = triangle_rule(28)
    lam = np.column_stack([1.0 - pts.sum(axis=1), pts])
    for t, tri in enumerate(tris):
        e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
        jac = abs(e1[0] * e2[1] - e1[1] * e2[0])
        xy = lam @ tri
        phase = np.exp(-1j * (xy @ alphas.T))
        ref = jac * np.einsum("q,qa,qj->aj", wts, phase, lam)
        assert np.abs(got[:, t, :] - ref).max() < 1e-10 * jac, \
            "analytic triangle integrals match quadrature"


def _verify_boundary(dtn_sign: float) -> None:
    medium = make_medium(1.0, 1.0, 2.0 * math.pi)
    incidence = make_incidence(medium, math.pi / 6, math.pi / 6)
    sol = flat_exact(medium, incidence)
    from .analytic import flat_field
    rng = np.random.default_rng(3)
    pts = np.column_stack([rng.uniform(0, 1, (20, 2)), np.zeros(20)])
    total = flat_field(sol, pts) + incident(incidence, pts)
    assert np.abs(total).max() < 1e-12, "rigid boundary condition"
    lattice = Lattice(1.0, 1.0, 0.3, 0.0)
    from .analytic import flat_modes

    class _Spec:
        N = 1

        def coefficient(self, n1, n2):
            if (n1, n2) == (0, 0):
                md, c = flat_modes(sol, lattice)[0]
                return field_from_coeffs(md, c)
            return np.zeros(3, dtype=complex)

    table = efficiencies(medium, incidence, lattice, _Spec())
    assert abs(table.total - 1.0) < 1e-10, "energy conservation"


_GROUPS = {
    "spectral": _verify_spectral,
    "energy": _verify_energy_structure,
    "trace": _verify_trace,
    "boundary": _verify_boundary,
}


def verify(group: str | None = None, dtn_sign: float = 1.0) -> int:
    """Run the analytic self-check groups; returns a process exit code.

    ``dtn_sign`` is a test hook that scales the DtN matrices fed to the
    checks, to confirm that a broken sign is caught.
    """
    names = [group] if group else list(_GROUPS)
    failed = False
    for name in names:
        if name not in _GROUPS:
            print(f"unknown group {name!r}", file=sys.stderr)
            return 2
        try:
            _GROUPS[name](dtn_sign)
        except AssertionError as exc:
            print(f"FAIL {name}: {exc}")
            failed = True
        else:
            print(f"PASS {name}")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="elastodtn",
        description="Adaptive DtN finite element solver for elastic "
                    "scattering by biperiodic surfaces")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "adapt"):
        p = sub.add_parser(name)
        p.add_argument("config", help="path to a key = value config file")
        p.add_argument("--dry-run", action="store_true",
                       help="validate the config and print the chosen "
                            "truncation order without solving")
    pv = sub.add_parser("verify")
    pv.add_argument("--group", default=None, choices=sorted(_GROUPS))
    pv.add_argument("--dtn-sign", type=float, default=1.0,
                    help=argparse.SUPPRESS)
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            return cmd_solve(args.config, args.dry_run)
        if args.command == "adapt":
            return cmd_adapt(args.config, args.dry_run)
        return verify(args.group, args.dtn_sign)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
