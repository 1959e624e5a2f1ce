"""Command-line front end.

    hsflow {solve,compare,peakon,spectrum,selfcheck} [--config PATH] [--out DIR] [--quiet]

The config is YAML (JSON also parses).  Missing keys take the values in
``MODE_DEFAULTS`` for the mode, then ``DEFAULTS``; the fully resolved config
is recorded in the manifest.  The exit status is 0 iff every gate in the manifest passes, 1 if a gate fails
and 2 if the run aborts with an error.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import ch, factorization, oracles
from .errors import HSFlowError, InvalidArgumentError
from .grid import GridFunction, make_grid
from .io import write_columns_csv, write_json
from .operators import KernelOperator

MODES = ("solve", "compare", "peakon", "spectrum", "selfcheck")

DEFAULTS = {
    "mode": "solve",
    "profile": {"name": "gaussian", "a": 1.0, "sigma": 1.0, "x0": 0.0},
    "L": 12.0,
    "n": 129,
    "scheme": "trapezoid",
    "times": [0.0, 0.5, 1.0],
    "dt": 0.01,
    "eulerian": {"L": None, "n": None, "reconstruction": "sum"},
    "tolerances": {
        "tail_mass": 1e-12,
        "orthogonality": 1e-9,
        "reconstruction": 1e-9,
        "drift": 1e-8,
        "spectral_drift": 1e-10,
        "route": 1e-8,
        "semiseparability": 1e-8,
        "jacobian": 1e-12,
        "compare": 1e-6,
        "spectrum": 1e-3,
    },
    "oracle": {"dt": 1e-3, "nonsymmetric_n": 24},
    "peakons": {"q": [-1.0, 1.0], "p": [1.0, 0.5]},
    "spectrum": {"count": 3},
    "seed": 0,
    "out": "hsflow-run",
}

# the Sturm-Liouville comparison needs a finer grid than the solver does
MODE_DEFAULTS = {"spectrum": {"L": 6.0, "n": 400}}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in (over or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "profile":
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    raw = {}
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(raw, dict):
            raise InvalidArgumentError(f"{path}: config must be a mapping")
    mode = (overrides or {}).get("mode", raw.get("mode", DEFAULTS["mode"]))
    cfg = _merge(_merge(DEFAULTS, MODE_DEFAULTS.get(mode, {})), raw)
    cfg = _merge(cfg, overrides or {})
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict):
    if cfg["mode"] not in MODES:
        raise InvalidArgumentError(f"unknown mode {cfg['mode']!r}")
    times = [float(t) for t in cfg["times"]]
    if not times:
        raise InvalidArgumentError("times must not be empty")
    if any(t < 0 for t in times) or times != sorted(times):
        raise InvalidArgumentError("times must be sorted and nonnegative")
    cfg["times"] = times
    if cfg["mode"] in ("solve", "selfcheck") and int(cfg["n"]) < 16:
        raise InvalidArgumentError("solve mode needs n >= 16")
    for key in ("L", "dt"):
        cfg[key] = float(cfg[key])
    cfg["n"] = int(cfg["n"])


class Gates:
    def __init__(self):
        self.entries: dict[str, dict] = {}

    def check(self, name: str, value: float, tol: float, kind: str = "max"):
        """``kind="max"``: pass iff value <= tol; ``"min"``: pass iff value >= tol."""
        value = float(value)
        ok = value <= tol if kind == "max" else value >= tol
        self.entries[name] = {"value": value, "tol": float(tol), "kind": kind, "status": "pass" if ok else "fail"}

    @property
    def passed(self) -> bool:
        return all(e["status"] == "pass" for e in self.entries.values())

    def failing(self) -> list[str]:
        return [k for k, e in self.entries.items() if e["status"] != "pass"]


def _grid(cfg):
    return make_grid(cfg["L"], cfg["n"], cfg["scheme"])


def _eulerian_nodes(cfg, grid):
    e = cfg["eulerian"]
    if e.get("L") is None and e.get("n") is None:
        return grid.nodes
    return make_grid(float(e.get("L") or cfg["L"]), int(e.get("n") or cfg["n"]), "trapezoid").nodes


def _max_abs(a: KernelOperator, b: KernelOperator) -> float:
    return float(np.max(np.abs(a.values - b.values)))


# -- modes -------------------------------------------------------------------

def run_solve(cfg: dict, out: Path) -> tuple[dict, Gates]:
    tol = cfg["tolerances"]
    grid = _grid(cfg)
    init = ch.init_data(cfg["profile"], grid, tail_tol=tol["tail_mass"])
    flow = ch.KernelFlow(init.K0)
    spec = flow.spec
    x = _eulerian_nodes(cfg, grid)
    method = cfg["eulerian"]["reconstruction"]
    gates = Gates()
    gates.check("spectrum_lower_bound", float(spec.eigenvalues[-1]) if spec.count else 0.0, -1e-12, "min")
    gates.check("spectrum_upper_bound", 0.5 * init.P + 1e-10 - float(spec.eigenvalues[0]), 0.0, "min")
    qs = ch.evolve_q(init.K0, cfg["times"], dt=cfg["dt"], flow=flow)
    table = []
    for k, t in enumerate(cfg["times"]):
        K_t = flow(t)
        p = ch.recover_p(K_t)
        q = qs[t]
        u = ch.reconstruct_u(q, p, x, method)
        m = ch.eulerian_m(q, p, x)
        state = ch.CHState(t, q, p, u, x, K_t)
        rep = ch.invariants_report(state, init, spec)
        fac = factorization.factor_exp(init.K0, t)
        K_mercer = ch.evolve_kernel(spec, init.K0, t)
        rep["orthogonality_defect"] = fac.orthogonality_defect
        rep["reconstruction_defect"] = fac.reconstruction_defect
        rep["route_defect"] = _max_abs(K_t, K_mercer)
        rep["semiseparability_defect"] = ch.semiseparability_defect(K_t)
        rep["spectrum_defect"] = rep["spectral_drift"]
        table.append(rep)
        tag = f"t{k:03d}"
        gates.check(f"{tag}.orthogonality", rep["orthogonality_defect"], tol["orthogonality"])
        gates.check(f"{tag}.reconstruction", rep["reconstruction_defect"], tol["reconstruction"])
        gates.check(f"{tag}.P_drift", rep["P_drift"], tol["drift"])
        gates.check(f"{tag}.H_drift", rep["H_drift"], tol["drift"])
        gates.check(f"{tag}.spectral_drift", rep["spectral_drift"], tol["spectral_drift"])
        gates.check(f"{tag}.route_defect", rep["route_defect"], tol["route"])
        gates.check(f"{tag}.semiseparability", rep["semiseparability_defect"], tol["semiseparability"])
        gates.check(f"{tag}.q_monotone", rep["q_monotonicity_margin"], 0.0, "min")
        gates.check(f"{tag}.jacobian_lower", rep["jacobian_lower_margin"], -tol["jacobian"], "min")
        gates.check(f"{tag}.jacobian_upper", rep["jacobian_upper_margin"], -tol["jacobian"], "min")
        write_columns_csv(out / f"lagrangian_{tag}.csv", {"xi": grid.nodes, "q": q.values, "p": p.values})
        write_columns_csv(out / f"eulerian_{tag}.csv", {"x": x, "u": u, "m": m})
    report = {
        "P": init.P,
        "spectrum": spec.eigenvalues,
        "conserved": table,
        "files": [f"{kind}_t{k:03d}.csv" for k in range(len(cfg["times"])) for kind in ("lagrangian", "eulerian")],
    }
    return report, gates


def _nonsymmetric_kernel(cfg) -> KernelOperator:
    rng = np.random.default_rng(int(cfg["seed"]))
    n = int(cfg["oracle"]["nonsymmetric_n"])
    g = make_grid(1.0, n)
    A = rng.standard_normal((n, n))
    A *= 1.0 / np.linalg.norm(A)
    return KernelOperator.from_sym(g, A)


def run_compare(cfg: dict, out: Path) -> tuple[dict, Gates]:
    tol = cfg["tolerances"]["compare"]
    dt = float(cfg["oracle"]["dt"])
    grid = _grid(cfg)
    init = ch.init_data(cfg["profile"], grid, tail_tol=cfg["tolerances"]["tail_mass"])
    times = cfg["times"]
    T = times[-1]
    fac = {t: factorization.lax_solve(init.K0, t).kernel for t in times}
    particles = oracles.integrate_particles(
        oracles.ParticleState.continuum(grid, grid.nodes, init.m0.values), dt, T, times
    )
    stepped = oracles.lax_step_evolve(init.K0, dt, T, True, times)
    K_ns = _nonsymmetric_kernel(cfg)
    stepped_ns = oracles.lax_step_evolve(K_ns, dt, T, False, times)
    gates = Gates()
    rows = []
    for k, t in enumerate(times):
        ps = particles[k]
        row = {
            "t": t,
            "particles_vs_factorization": _max_abs(oracles.kernel_from_particles(ps), fac[t]),
            "lax_rk4_vs_factorization": _max_abs(stepped[k], fac[t]),
            "literal_assembly_vs_factorization": _max_abs(factorization.lax_solution_kernel(init.K0, t), fac[t]),
            "gamma_vs_4K": _max_abs(
                oracles.gamma_map(GridFunction(grid, ps.q), GridFunction(grid, ps.p)), 4.0 * fac[t]
            ),
            "nonsymmetric_rk4_vs_factorization": _max_abs(stepped_ns[k], factorization.lax_solve(K_ns, t).kernel),
        }
        rows.append(row)
        for name, value in row.items():
            if name != "t":
                gates.check(f"t{k:03d}.{name}", value, tol)
    return {"comparisons": rows}, gates


def run_peakon(cfg: dict, out: Path) -> tuple[dict, Gates]:
    tol = cfg["tolerances"]["compare"]
    dt = float(cfg["oracle"]["dt"])
    state0 = oracles.ParticleState.peakons(cfg["peakons"]["q"], cfg["peakons"]["p"])
    times = cfg["times"]
    traj = oracles.integrate_particles(state0, dt, times[-1], times)
    K0 = oracles.kernel_from_particles(state0)
    qs = ch.evolve_q(K0, times, dt=cfg["dt"], q0=state0.q)
    gates = Gates()
    rows = []
    for k, t in enumerate(times):
        Kt = factorization.lax_solve(K0, t).kernel
        row = {
            "t": t,
            "kernel_discrepancy": _max_abs(oracles.kernel_from_particles(traj[k]), Kt),
            "q_discrepancy": float(np.max(np.abs(qs[t].values - traj[k].q))),
            "p_discrepancy": float(np.max(np.abs(2.0 * np.diag(Kt.values) - traj[k].p))),
            "q": traj[k].q,
            "p": traj[k].p,
        }
        rows.append(row)
        for name in ("kernel_discrepancy", "q_discrepancy", "p_discrepancy"):
            gates.check(f"t{k:03d}.{name}", row[name], tol)
    return {"permutation": list(state0.permutation), "trajectory": rows}, gates


def run_spectrum(cfg: dict, out: Path) -> tuple[dict, Gates]:
    grid = _grid(cfg)
    init = ch.init_data(cfg["profile"], grid, tail_tol=cfg["tolerances"]["tail_mass"])
    count = int(cfg["spectrum"]["count"])
    lam_K = ch.mercer(init.K0).eigenvalues[:count]
    lam_SL = oracles.sturm_liouville_spectrum(init.m0, count)
    resid = np.abs(2.0 * lam_K * lam_SL - 1.0)
    gates = Gates()
    for i, r in enumerate(resid):
        gates.check(f"mode{i}.residual", r, cfg["tolerances"]["spectrum"])
    return {"kernel_eigenvalues": lam_K, "sturm_liouville_eigenvalues": lam_SL, "residuals": resid}, gates


def _summary(cfg: dict, L: float, n: int) -> np.ndarray:
    grid = make_grid(L, n, cfg["scheme"])
    init = ch.init_data(cfg["profile"], grid, tail_tol=cfg["tolerances"]["tail_mass"])
    spec = ch.mercer(init.K0)
    T = cfg["times"][-1]
    flow = ch.KernelFlow(init.K0, spec)
    q = ch.evolve_q(init.K0, [T], dt=cfg["dt"], flow=flow)[T]
    p = ch.recover_p(flow(T))
    probe = np.array([-1.0, 0.0, 1.0])
    u = ch.reconstruct_u(q, p, probe, "split")
    lam = np.zeros(3)
    lam[: min(3, spec.count)] = spec.eigenvalues[:3]
    return np.concatenate([[init.P], lam, u])


def run_selfcheck(cfg: dict, out: Path) -> tuple[dict, Gates]:
    L, n = cfg["L"], cfg["n"]
    names = ["P", "lambda1", "lambda2", "lambda3", "u(-1,T)", "u(0,T)", "u(1,T)"]
    base = _summary(cfg, L, n)
    wide = _summary(cfg, 2 * L, 2 * n - 1)  # same spacing, doubled domain
    fine = _summary(cfg, L, 2 * n - 1)
    finer = _summary(cfg, L, 4 * n - 3)
    d1, d2 = np.abs(base - fine), np.abs(fine - finer)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d2 > 0, d1 / d2, np.inf)
    gates = Gates()
    trunc = np.abs(base - wide)
    gates.check("domain_doubling_change", float(np.max(trunc)), cfg["tolerances"]["drift"])
    return {
        "quantities": names,
        "base": base,
        "doubled_L_and_n": wide,
        "domain_doubling_change": trunc,
        "refinement_differences": [d1, d2],
        "convergence_ratios": [r if np.isfinite(r) else None for r in ratio],
    }, gates


RUNNERS = {
    "solve": run_solve,
    "compare": run_compare,
    "peakon": run_peakon,
    "spectrum": run_spectrum,
    "selfcheck": run_selfcheck,
}


def run(cfg: dict, out: Path) -> tuple[int, dict]:
    out.mkdir(parents=True, exist_ok=True)
    # the output location is not part of the recorded run description
    manifest = {"mode": cfg["mode"], "config": {k: v for k, v in cfg.items() if k != "out"}}
    try:
        report, gates = RUNNERS[cfg["mode"]](cfg, out)
    except HSFlowError as exc:
        manifest.update(status="fail", error=exc.record(), gates={})
        write_json(out / "manifest.json", manifest)
        return 2, manifest
    manifest.update(report)
    manifest["gates"] = gates.entries
    manifest["status"] = "pass" if gates.passed else "fail"
    manifest["error"] = None if gates.passed else {"error": "gate-failure", "failing": gates.failing()}
    write_json(out / "manifest.json", manifest)
    return (0 if gates.passed else 1), manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hsflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        s = sub.add_parser(mode)
        s.add_argument("--config", type=Path, default=None, help="YAML or JSON config file")
        s.add_argument("--out", type=Path, default=None, help="output directory")
        s.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, {"mode": args.mode})
    except (HSFlowError, OSError, yaml.YAMLError) as exc:
        rec = exc.record() if isinstance(exc, HSFlowError) else {"error": "config", "message": str(exc)}
        print(json.dumps(rec, sort_keys=True), file=sys.stderr)
        return 2
    if args.out is not None:
        cfg["out"] = str(args.out)
    code, manifest = run(cfg, Path(cfg["out"]))
    if manifest.get("error"):
        print(json.dumps(manifest["error"], sort_keys=True), file=sys.stderr)
    if not args.quiet:
        for name, g in manifest["gates"].items():
            print(f"{g['status']:4s}  {name}  {g['value']:.3e} ({'<=' if g['kind'] == 'max' else '>='} {g['tol']:.1e})")
        print(f"{manifest['mode']}: {manifest['status']} -> {cfg['out']}")
    return code


if __name__ == "__main__":
    sys.exit(main())
