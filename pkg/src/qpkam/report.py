"""Pipeline orchestration and run reports.

Each command builds its stage chain, collects verdicts and diagnostics into a
deterministic report dict (bit-identical for identical config + seed on one
platform; no wall-clock content), and writes flat-file outputs.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from . import __version__
from .egorov import OperatorBundle, conjugate_generator, regularize
from .errors import SmallDivisorError, StageError
from .fourier import to_csv as torus_to_csv
from .kam import (KamParams, assemble_full_diagonalizer, kam_iterate)
from .measure import DModel, excluded_measure
from .operators import ToeplitzOperator, majorant_norm, structure_check
from .evolution import evolve_full, evolve_reduced, norm_stability_report
from .straightening import diophantine_zeroth, straighten_iterate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_OMEGA_EXCLUDED = 3
EXIT_STAGE = 4

__all__ = ["PipelineResult", "run_straighten", "run_reduce", "run_evolve",
           "run_measure", "run_selfcheck", "write_outputs",
           "EXIT_OK", "EXIT_CONFIG", "EXIT_OMEGA_EXCLUDED", "EXIT_STAGE"]


@dataclass
class PipelineResult:
    report: dict
    exit_code: int
    artifacts: dict


def _base_report(config):
    return {
        "provenance": {
            "config_hash": config.config_hash(),
            "package_version": __version__,
            "schema_version": config.schema_version,
            "seed": config.seed,
        },
        "stages": {},
    }


def _setup(config):
    fr, tr = config.frequency, config.truncation
    omega = fr.omega_vector()
    a = config.problem.a_function(fr.nu, tr.l_max, tr.j_max)
    Q = config.problem.q_operator(fr.nu, tr.l_max, tr.j_max)
    return omega, a, Q


def run_omega_scan(config):
    """Straightening over an omega grid via the worker pool (threads)."""
    from concurrent.futures import ThreadPoolExecutor

    fr, tr = config.frequency, config.truncation
    a = config.problem.a_function(fr.nu, tr.l_max, tr.j_max)
    samples = config.frequency.omega_samples()

    def one(om):
        try:
            st = straighten_iterate(a, om, fr.gamma, fr.tau)
            return {"omega": list(map(float, om)), "m": st.m,
                    "residual": st.residual}
        except Exception as exc:
            return {"omega": list(map(float, om)), "failed": str(exc)}

    with ThreadPoolExecutor(max_workers=max(1, config.threads)) as ex:
        rows = list(ex.map(one, samples))
    report = _base_report(config)
    report["stages"]["straighten_scan"] = {"rows": rows}
    return PipelineResult(report, EXIT_OK, {"scan": rows})


def run_straighten(config):
    if config.frequency.preset == "grid" and config.frequency.grid_points:
        return run_omega_scan(config)
    report = _base_report(config)
    fr, tr = config.frequency, config.truncation
    omega, a, _ = _setup(config)
    report["stages"]["diophantine"] = {
        "holds": bool(diophantine_zeroth(omega, fr.gamma, tr.l_max)),
        "omega": omega.tolist(),
    }
    try:
        st = straighten_iterate(a, omega, fr.gamma, fr.tau)
    except SmallDivisorError as exc:
        report["stages"]["straighten"] = {
            "failed": "first-order Melnikov set (small divisor)",
            "indices": exc.indices,
        }
        return PipelineResult(report, EXIT_OMEGA_EXCLUDED,
                              {"straightening": None})
    report["stages"]["straighten"] = {
        "m": st.m,
        "residual": st.residual,
        "iterations": st.iterations,
        "residual_history": st.history,
    }
    return PipelineResult(report, EXIT_OK, {"straightening": st})


def run_reduce(config, keep_operators=True):
    res = run_straighten(config)
    if res.exit_code != EXIT_OK:
        return res
    report = res.report
    st = res.artifacts["straightening"]
    fr, tr, kb = config.frequency, config.truncation, config.kam
    omega, a, Q = _setup(config)
    bundle = OperatorBundle(a=a, Q=Q)
    try:
        reg = regularize(bundle, omega, st, j_max_op=tr.j_max,
                         n_steps=kb.n_flow_steps, rho=tr.rho)
    except StageError as exc:
        report["stages"]["regularize"] = {"failed": str(exc)}
        return PipelineResult(report, EXIT_STAGE, {"straightening": st})
    diag = dict(reg.diagnostics)
    diag["structure"] = {k: (bool(v) if isinstance(v, (bool, np.bool_)) else v)
                         for k, v in diag["structure"].items()}
    report["stages"]["regularize"] = diag

    params = KamParams(nu=fr.nu, gamma=fr.gamma, N0=kb.N0, k_max=kb.k_max,
                       tau=fr.tau, b0=kb.b0, a_exp=kb.a_exp, tau1=kb.tau1,
                       floor=kb.floor, series_tol=kb.series_tol)
    if params.overrides:
        report["stages"].setdefault("kam", {})["overrides"] = params.overrides
    out = kam_iterate(reg.m, reg.R, omega, params, s0=tr.s0)
    kam_rep = report["stages"].setdefault("kam", {})
    kam_rep["trace"] = [_json_safe(s) for s in out.trace.steps]
    kam_rep["decay_slope"] = out.trace.decay_slope()
    if out.excluded:
        kam_rep["failed"] = "second-order Melnikov set (omega excluded)"
        kam_rep["violation"] = out.violation
        return PipelineResult(report, EXIT_OMEGA_EXCLUDED,
                              {"straightening": st, "regularized": reg})
    kam_rep["converged"] = bool(out.converged)
    sp = out.spectral
    kam_rep["r_oddness_defect"] = sp.oddness_defect()
    kam_rep["sup_weighted_r"] = sp.weighted_sup()

    Phi, Phi_inv = assemble_full_diagonalizer(reg.Psi, reg.Psi_inv,
                                              out.Phi2, out.Phi2_inv)
    ML = bundle.generator(tr.j_max)
    Mfin = conjugate_generator(ML, Phi, Phi_inv, omega)
    target = ToeplitzOperator.zeros(fr.nu, tr.l_max, tr.j_max)
    idx = (tr.l_max,) * fr.nu
    target.entries[idx][np.diag_indices(2 * tr.j_max + 1)] = -1j * sp.d
    resid = (Mfin - target).zero_x_average_row_col()
    interior = resid.restrict_interior(tr.j_max // 2, tr.l_max // 2)
    kam_rep["final_residual_interior"] = majorant_norm(interior, tr.s0)
    kam_rep["final_structure"] = _json_safe(structure_check(Mfin))
    artifacts = {"straightening": st, "regularized": reg, "kam": out,
                 "Phi": Phi, "Phi_inv": Phi_inv, "spectral": sp}
    if not keep_operators:
        artifacts = {"spectral": sp}
    return PipelineResult(report, EXIT_OK, artifacts)


def run_evolve(config):
    res = run_reduce(config)
    if res.exit_code != EXIT_OK:
        return res
    report = res.report
    fr, tr, ev = config.frequency, config.truncation, config.evolution
    omega, a, Q = _setup(config)
    sp = res.artifacts["spectral"]
    u0 = ev.u0_vector(tr.j_max)
    s_list = [tr.s0 + 2.0] + list(config.truncation.s_list)
    traj = evolve_full(u0, a, Q, omega, ev.T, ev.dt, s_list,
                       j_max=tr.j_max, record_every=ev.record_every)
    reduced = evolve_reduced(u0, res.artifacts["Phi"],
                             res.artifacts["Phi_inv"], sp, omega,
                             traj.times, s_list)
    s_report = tr.s0 + 2.0
    lo, hi = norm_stability_report(traj, s_report)
    denom = np.linalg.norm(traj.states, axis=-1)
    rel = np.linalg.norm(traj.states - reduced.states, axis=-1) \
        / np.maximum(denom, 1e-300)
    report["stages"]["evolve"] = {
        "s": s_report,
        "c_lower": lo,
        "c_upper": hi,
        "reduced_vs_full_rel": float(np.max(rel)),
        "n_snapshots": int(traj.times.size),
    }
    res.artifacts["trajectory"] = traj
    res.artifacts["reduced_trajectory"] = reduced
    return PipelineResult(report, EXIT_OK, res.artifacts)


def run_measure(config):
    report = _base_report(config)
    fr, mb = config.frequency, config.measure
    omega = fr.omega_vector()
    d_model = DModel(m=_surrogate_m(config))
    rows = excluded_measure(mb.gammas, omega, d_model, fr.L, fr.nu,
                            tau=fr.tau, ell_cut=mb.ell_cut, j_cut=mb.j_cut,
                            n_slices=mb.n_slices, tau1=mb.tau1,
                            c_delpiero=mb.c_delpiero, threads=config.threads)
    ratios = [r.measure_over_gamma for r in rows]
    gs = [r.gamma for r in rows]
    ms = [r.measure for r in rows]
    slope = None
    if len(ms) >= 2 and all(m > 0 for m in ms):
        slope = float(np.polyfit(np.log(gs), np.log(ms), 1)[0])
    report["stages"]["measure"] = {
        "rows": [_json_safe(vars(r)) for r in rows],
        "ratio_spread": (max(ratios) - min(ratios)) / max(ratios)
        if ratios else None,
        "loglog_slope": slope,
    }
    return PipelineResult(report, EXIT_OK, {"rows": rows})


def _surrogate_m(config):
    """m from the phi-averaged profile: the harmonic-mean straightening."""
    fr, tr = config.frequency, config.truncation
    a = config.problem.a_function(fr.nu, tr.l_max, tr.j_max)
    abar = a.coeffs[(tr.l_max,) * fr.nu]  # phi-average, x-Fourier coefficients
    nx = 4 * (2 * tr.j_max + 1)
    x = 2 * np.pi * np.arange(nx) / nx
    vals = np.zeros(nx, dtype=complex)
    for k in range(-tr.j_max, tr.j_max + 1):
        vals += abar[k + tr.j_max] * np.exp(1j * k * x)
    avg = np.mean(1.0 / (1.0 + vals.real))
    return float(1.0 / avg)


def run_selfcheck(config):
    from .selfcheck import run_suite

    report = _base_report(config)
    results = run_suite(seed=config.seed)
    report["stages"]["selfcheck"] = {
        "results": [{"name": n, "passed": bool(p), "detail": d}
                    for n, p, d in results],
        "all_passed": all(p for _, p, _ in results),
    }
    code = EXIT_OK if report["stages"]["selfcheck"]["all_passed"] else EXIT_STAGE
    return PipelineResult(report, code, {})


# -- outputs ---------------------------------------------------------------


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and (np.isnan(obj) or np.isinf(obj)):
        return repr(obj)
    return obj


def write_outputs(result, config, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump(_json_safe(result.report), f, indent=2, sort_keys=True)
    arts = result.artifacts
    if "spectral" in arts:
        sp = arts["spectral"]
        with open(os.path.join(out_dir, "eigenvalues.csv"), "w",
                  newline="") as f:
            w = csv.writer(f)
            w.writerow(["j", "d_j", "r_j"])
            jj = np.arange(-sp.j_max, sp.j_max + 1)
            for j, d, r in zip(jj, sp.d, sp.r):
                if j != 0:
                    w.writerow([int(j), float(d), float(r)])
    if "kam" in arts and arts["kam"].trace is not None:
        with open(os.path.join(out_dir, "trace.json"), "w") as f:
            json.dump(_json_safe(arts["kam"].trace.steps), f, indent=2)
    if "straightening" in arts and arts["straightening"] is not None:
        torus_to_csv(arts["straightening"].beta,
                     os.path.join(out_dir, "beta.csv"))
    if "trajectory" in arts:
        traj = arts["trajectory"]
        with open(os.path.join(out_dir, "norms.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "s", "norm"])
            for s, arr in traj.norms.items():
                for t, v in zip(traj.times, arr):
                    w.writerow([float(t), float(s), float(v)])
    if "rows" in arts:
        with open(os.path.join(out_dir, "measure.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["gamma", "L", "measure", "measure_over_gamma",
                        "tail_bound"])
            for r in arts["rows"]:
                w.writerow([r.gamma, config.frequency.L, r.measure,
                            r.measure_over_gamma, r.tail_bound])
