"""Command-line pipeline: stage subcommands, manifests, reproducible runs.

Each subcommand wraps one library operation with file I/O in a shared output
directory and writes ``<stage>.manifest.json`` recording the config hash,
sha256 of every input and output artifact, wall-clock seconds, and stage
diagnostics.  Artifact files are bit-exact across reruns with identical
inputs; manifests differ only in the ``seconds`` entry.

Formats: JSON for configs/reports, MFLD v1 (+ VTK copies of the scalar
results) for fields, CSV for traces.  Exit codes: 0 success, 2 config
error, 3 numerical failure (non-convergence), 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np
import scipy.fft

from .acoustic_inverse import (
    InverseSourceConfig,
    SphericalMeanOperator,
    combine_b0,
    invert_source,
)
from .coil import CoilFields, coil_fields, check_curl_identity
from .config import ExperimentConfig, load_config, render_phantom
from .current_recovery import potential_divergence_check, recover_current
from .elliptic import Conductivity
from .errors import ConfigError, ConvergenceError
from .fieldio import read_mfld, write_mfld, write_traces_csv, write_vtk
from .forward import (
    MeasurementSet,
    SourceDistribution,
    adjoint_current,
    measurement_times,
    padded_grid,
    synthesize_emf,
)
from .grid import DomainMask, ScalarField, VectorField
from .phantoms import validate_sigma
from .sigma_recovery import recover_resistivity
from .stability import evaluate_stability

log = logging.getLogger("maetkit")

_AXIS = "xyz"


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(
    out: Path,
    stage: str,
    cfg: ExperimentConfig,
    inputs: list,
    outputs: list,
    t0: float,
    diagnostics: dict,
) -> Path:
    payload = {
        "stage": stage,
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "inputs": {p.name: _sha256(p) for p in inputs},
        "outputs": {p.name: _sha256(p) for p in outputs},
        "seconds": round(time.perf_counter() - t0, 3),
        "diagnostics": diagnostics,
    }
    path = out / f"{stage}.manifest.json"
    _write_json(path, payload)
    log.info("%s: wrote %s", stage, path)
    return path


def _need(out: Path, name: str, producer: str) -> Path:
    path = out / name
    if not path.exists():
        raise ConfigError(f"missing input {path}; run the {producer!r} stage first")
    return path


def _load_field(path: Path, grid, what: str):
    fld = read_mfld(path)
    if grid is not None and fld.grid != grid:
        raise ConfigError(
            f"{path.name}: grid {fld.grid.dims} does not match {what} grid {grid.dims}"
        )
    return fld


# ---------------------------------------------------------------------------
# stages


def stage_phantom(cfg: ExperimentConfig, out: Path) -> dict:
    t0 = time.perf_counter()
    sigma = render_phantom(cfg)
    stats = validate_sigma(sigma, cfg.stability["lam"], cfg.stability["Lam"])
    fmfld, fvtk, fjson = out / "sigma.mfld", out / "sigma.vtk", out / "sigma.json"
    write_mfld(fmfld, sigma)
    write_vtk(fvtk, sigma, name="sigma")
    _write_json(
        fjson,
        {
            "kind": cfg.raw["phantom"].get("kind"),
            "lam": cfg.stability["lam"],
            "Lam": cfg.stability["Lam"],
            **stats,
        },
    )
    _manifest(out, "phantom", cfg, [], [fmfld, fvtk, fjson], t0, stats)
    return stats


def stage_coil_field(cfg: ExperimentConfig, out: Path) -> dict:
    t0 = time.perf_counter()
    fields = coil_fields(cfg.coils[0], cfg.grid)
    ident = check_curl_identity(fields)
    fk, fg = out / "coil_kernel.mfld", out / "coil_curl.mfld"
    write_mfld(fk, fields.kernel)
    write_mfld(fg, fields.kernel_curl)
    diag = {"curl_identity_rel_l2": ident["rel_l2"], "curl_identity_max": ident["max_abs"]}
    _manifest(out, "coil-field", cfg, [], [fk, fg], t0, diag)
    return diag


def _coil_fields_from_files(cfg: ExperimentConfig, out: Path) -> tuple[CoilFields, list]:
    fk = _need(out, "coil_kernel.mfld", "coil-field")
    fg = _need(out, "coil_curl.mfld", "coil-field")
    kernel = _load_field(fk, cfg.grid, "config")
    kernel_curl = _load_field(fg, cfg.grid, "config")
    return CoilFields(cfg.coils[0], kernel, kernel_curl), [fk, fg]


def stage_forward(cfg: ExperimentConfig, out: Path) -> dict:
    t0 = time.perf_counter()
    fsig = _need(out, "sigma.mfld", "phantom")
    sigma = _load_field(fsig, cfg.grid, "config")
    fields, ins = _coil_fields_from_files(cfg, out)
    cond = Conductivity(sigma, cfg.stability["lam"])
    current = adjoint_current(cond, fields)
    fj = out / "current.mfld"
    write_mfld(fj, current.J)
    diag = {
        "div_residual": current.div_residual,
        "net_boundary_flux": current.net_boundary_flux,
        "solve_iterations": current.solve_iterations,
        "solve_residual": current.solve_residual,
    }
    _manifest(out, "forward", cfg, [fsig, *ins], [fj], t0, diag)
    return diag


def stage_measure(cfg: ExperimentConfig, out: Path) -> dict:
    t0 = time.perf_counter()
    fj = _need(out, "current.mfld", "forward")
    J = _load_field(fj, cfg.grid, "config")
    mask = DomainMask(cfg.grid)
    centers = cfg.geometry.centers(cfg.n_centers)
    times = measurement_times(
        mask, centers, cfg.physics.sound_speed, cfg.epsilon, cfg.n_times
    )
    outputs, norms = [], {}
    for axis, b0 in zip(cfg.raw["physics"]["b0_axes"], cfg.b0_vectors()):
        meas = synthesize_emf(J, mask, cfg.physics, b0, centers, times)
        path = out / f"traces_{_AXIS[int(axis)]}.csv"
        meas.save_csv(path)
        outputs.append(path)
        norms[f"trace_norm_{_AXIS[int(axis)]}"] = float(np.linalg.norm(meas.values))
        log.info("measure: %s (per-axis L2 %.3e)", path.name, norms[f"trace_norm_{_AXIS[int(axis)]}"])
    diag = {**norms, "coverage_gap": meas.coverage_gap(mask), "n_centers": len(centers)}
    _manifest(out, "measure", cfg, [fj], outputs, t0, diag)
    return diag


def stage_invert_source(cfg: ExperimentConfig, out: Path) -> dict:
    t0 = time.perf_counter()
    axes = [int(a) for a in cfg.raw["physics"]["b0_axes"]]
    ins = [_need(out, f"traces_{_AXIS[a]}.csv", "measure") for a in axes]
    big, box = padded_grid(cfg.grid, 3.0 * cfg.epsilon)
    inv = cfg.inversion
    source_cfg = InverseSourceConfig(
        tikhonov_alpha=float(inv["source_alpha"]) * cfg.grid.spacing**3,
        max_iter=int(inv["source_iters"]),
        tol=float(inv["source_tol"]),
        degree=int(inv["degree"]),
    )
    b0s = cfg.b0_vectors()
    fhats, diag, operator = [], {}, None
    for path, axis, b0 in zip(ins, axes, b0s):
        meas = MeasurementSet.load_csv(
            path, b0, cfg.physics.rho, cfg.physics.sound_speed, cfg.epsilon
        )
        if operator is None:
            operator = SphericalMeanOperator(
                big,
                meas.centers,
                meas.radii,
                degree=source_cfg.degree,
                epsilon=cfg.epsilon,
            )
        fhat, info = invert_source(meas, big, source_cfg, operator=operator)
        fhats.append(fhat)
        diag[f"cgls_iterations_{_AXIS[axis]}"] = int(info["iterations"])
        diag[f"cgls_normal_residual_{_AXIS[axis]}"] = float(info["normal_residual"][-1])
        log.info(
            "invert-source: axis %s done in %d iterations",
            _AXIS[axis],
            info["iterations"],
        )
    strengths = [float(np.linalg.norm(b)) for b in b0s]
    if all(s == 0.0 for s in strengths):
        src = SourceDistribution(
            W=VectorField(big, np.zeros(big.dims + (3,))),
            epsilon=cfg.epsilon,
            source_box=box,
            total_integral=np.zeros(3),
        )
        diag["zero_background_field"] = True
    else:
        src = combine_b0(
            fhats,
            b0s,
            cfg.physics.rho,
            cfg.epsilon,
            source_box=box,
            two_direction=len(axes) == 2,
        )
    fw = out / "source.mfld"
    write_mfld(fw, src.W)
    diag["support_leak"] = float(src.support_leak)
    diag["total_integral"] = [float(v) for v in src.total_integral]
    _manifest(out, "invert-source", cfg, ins, [fw], t0, diag)
    return diag


def stage_recover_current(cfg: ExperimentConfig, out: Path) -> dict:
    t0 = time.perf_counter()
    fw = _need(out, "source.mfld", "invert-source")
    big, box = padded_grid(cfg.grid, 3.0 * cfg.epsilon)
    W = _load_field(fw, big, "padded source")
    src = SourceDistribution(W=W, epsilon=cfg.epsilon, source_box=box)
    J, potential = recover_current(src)
    ratio = potential_divergence_check(src, potential)
    fj = out / "current_rec.mfld"
    write_mfld(fj, J)
    diag = {"potential_divergence_ratio": ratio}
    _manifest(out, "recover-current", cfg, [fw], [fj], t0, diag)
    return diag


def stage_recover_sigma(cfg: ExperimentConfig, out: Path) -> dict:
    t0 = time.perf_counter()
    fj = _need(out, "current_rec.mfld", "recover-current")
    J = _load_field(fj, cfg.grid, "config")
    fields, ins = _coil_fields_from_files(cfg, out)
    inv = cfg.inversion
    est = recover_resistivity(
        J,
        fields.kernel_curl,
        cfg.stability["lam"],
        alpha=float(inv["sigma_alpha"]),
        iter_cap=int(inv["sigma_iters"]),
        tol=float(inv["sigma_tol"]),
    )
    fs, fv = out / "sigma_rec.mfld", out / "sigma_rec.vtk"
    fr = out / "resistivity_rec.mfld"
    write_mfld(fs, est.sigma)
    write_vtk(fv, est.sigma, name="sigma_rec")
    write_mfld(fr, est.r)
    diag = {
        "converged": bool(est.converged),
        "iterations": int(est.iterations),
        "projected_gradient": float(est.projected_gradient),
        "objective_final": float(est.objective_history[-1]),
        "active_fraction": float(est.active_mask.mean()),
    }
    _manifest(out, "recover-sigma", cfg, [fj, *ins], [fs, fv, fr], t0, diag)
    if not est.converged:
        raise ConvergenceError(
            f"resistivity recovery stopped unconverged after {est.iterations} "
            f"iterations (projected gradient {est.projected_gradient:.3e})"
        )
    return diag


def stage_diagnose(cfg: ExperimentConfig, out: Path) -> dict:
    t0 = time.perf_counter()
    fsig = _need(out, "sigma.mfld", "phantom")
    sigma = _load_field(fsig, cfg.grid, "config")
    fields, ins = _coil_fields_from_files(cfg, out)
    lam = cfg.stability["lam"]
    mask = DomainMask(cfg.grid)
    omega_p = cfg.interior_mask()
    frec = out / "sigma_rec.mfld"
    diag: dict = {}
    if frec.exists():
        other = _load_field(frec, cfg.grid, "config")
        ins = [frec, *ins]
        sel = omega_p.inside
        scale = float(np.sum(np.abs(sigma.values[sel])))
        diag["rel_l1_interior"] = float(
            np.sum(np.abs(other.values[sel] - sigma.values[sel])) / scale
        )
        diag["rel_l2_interior"] = float(
            np.linalg.norm(other.values[sel] - sigma.values[sel])
            / np.linalg.norm(sigma.values[sel])
        )
    else:
        other = ScalarField(cfg.grid, np.full(cfg.grid.dims, 1.0))
    report = evaluate_stability(
        Conductivity(sigma, lam),
        Conductivity(other, lam),
        fields,
        mask,
        omega_p,
        alpha=float(cfg.stability["alpha"]),
    )
    fout = out / "diagnose.json"
    with open(fout, "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    diag.update(
        {
            "c_constraint": report.c_constraint,
            "empirical_cs": report.empirical_cs,
            "weighted_lhs": report.weighted_lhs,
            "weighted_rhs": report.weighted_rhs,
        }
    )
    _manifest(out, "diagnose", cfg, [fsig, *ins], [fout], t0, diag)
    return diag


_STAGES = {
    "phantom": stage_phantom,
    "coil-field": stage_coil_field,
    "forward": stage_forward,
    "measure": stage_measure,
    "invert-source": stage_invert_source,
    "recover-current": stage_recover_current,
    "recover-sigma": stage_recover_sigma,
    "diagnose": stage_diagnose,
}

_PIPELINE_ORDER = list(_STAGES)


def stage_pipeline(cfg: ExperimentConfig, out: Path) -> dict:
    t0 = time.perf_counter()
    for name in _PIPELINE_ORDER:
        log.info("pipeline: running %s", name)
        _STAGES[name](cfg, out)
    chain = {
        f"{name}.manifest.json": _sha256(out / f"{name}.manifest.json")
        for name in _PIPELINE_ORDER
    }
    final = json.loads((out / "diagnose.manifest.json").read_text())["diagnostics"]
    payload = {
        "stage": "pipeline",
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "stage_manifests": chain,
        "seconds": round(time.perf_counter() - t0, 3),
        "diagnostics": final,
    }
    _write_json(out / "pipeline.manifest.json", payload)
    return final


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maetkit",
        description=(
            "Conductivity imaging pipeline: phantom, coil fields, forward "
            "current, trace synthesis, three-stage inversion, diagnostics."
        ),
    )
    parser.add_argument("--config", help="JSON experiment config (defaults used if omitted)")
    parser.add_argument("--out", default="maet-out", help="output directory (default: maet-out)")
    parser.add_argument(
        "--threads", type=int, default=None, help="cap FFT worker threads for this run"
    )
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--verbose", action="store_true", help="debug-level logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in [*_STAGES, "pipeline"]:
        sub.add_parser(name, help=f"run the {name} stage")
    return parser


def run(args) -> int:
    cfg = load_config(args.config, seed=args.seed)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    pool = (
        scipy.fft.set_workers(args.threads)
        if args.threads and args.threads > 0
        else nullcontext()
    )
    with pool:
        if args.command == "pipeline":
            stage_pipeline(cfg, out)
        else:
            _STAGES[args.command](cfg, out)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return run(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    except ConvergenceError as exc:
        log.error("numerical failure: %s", exc)
        return 3
    except OSError as exc:
        log.error("i/o error: %s", exc)
        return 4


if __name__ == "__main__":
    sys.exit(main())
