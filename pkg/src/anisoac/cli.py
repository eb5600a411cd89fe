"""Command line entry point: ``anisoac <subcommand> [--config FILE] [--set key=value ...]``.

Exit codes: 0 success, 2 ran but a certificate failed, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config

log = logging.getLogger("anisoac")

EXIT_OK, EXIT_ERROR, EXIT_CERT = 0, 1, 2


def _atomic_text(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _clean(obj):
    """Make numpy scalars/arrays JSON friendly; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class RunManifest:
    config_hash: str
    version: str
    command: str
    timings: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    exit_code: int = 0


class Run:
    """Output directory bookkeeping shared by the subcommands."""

    def __init__(self, command: str, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = Path(cfg["run.output"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(cfg.digest(), __version__, command)
        self._t = time.perf_counter()

    def stage(self, name: str):
        now = time.perf_counter()
        self.manifest.timings[name] = round(now - self._t, 6)
        self._t = now

    def _track(self, path: Path):
        rel = str(path.relative_to(self.out))
        if rel not in self.manifest.files:
            self.manifest.files.append(rel)

    def json(self, name: str, data):
        path = self.out / name
        _atomic_text(path, json.dumps(_clean(data), sort_keys=True, indent=1) + "\n")
        self._track(path)
        return path

    def csv(self, name: str, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
        path = self.out / name
        _atomic_text(path, buf.getvalue())
        self._track(path)
        return path

    def snapshot(self, name: str, u, p, tags=None):
        from .domain import save_snapshot

        path = self.out / name
        save_snapshot(path, u, p.grid, epsilon=p.epsilon, delta=p.delta, tags=tags)
        self._track(path)
        self._track(path.with_name(path.name + ".json"))
        return path

    def track_tree(self, directory: Path):
        for f in sorted(directory.rglob("*")):
            if f.is_file():
                self._track(f)

    def finish(self, code: int):
        self.manifest.exit_code = code
        self.manifest.files.sort()
        data = {
            "config_hash": self.manifest.config_hash,
            "version": self.manifest.version,
            "command": self.manifest.command,
            "timings": self.manifest.timings,
            "files": self.manifest.files,
            "exit_code": code,
            "config": self.cfg.to_dict(),
        }
        _atomic_text(self.out / "manifest.json", json.dumps(_clean(data), sort_keys=True, indent=1) + "\n")
        return code


# -- object construction -------------------------------------------------------

def build_grid(cfg):
    from .domain import Grid

    cells = tuple(cfg["grid.cells"])
    lengths = tuple(cfg["grid.lengths"]) or (1.0,) * len(cells)
    return Grid(cells, lengths)


def build_potential(cfg):
    from .potential import make_potential

    return make_potential(cfg["potential.family"], cfg["potential.coefficients"])


def build_integrand(cfg, grid):
    from .integrand import Modulation, make_integrand

    mod = None
    if cfg["integrand.modulation.amplitude"] != 0.0:
        k = tuple(cfg["integrand.modulation.wavevector"]) or (0,) * (grid.n - 1) + (1,)
        mod = Modulation(cfg["integrand.modulation.amplitude"], k, cfg["integrand.modulation.phase"])
    return make_integrand(cfg["integrand.family"], grid.n, cfg["integrand.matrix"],
                          cfg["integrand.beta"], mod, grid.lengths)


def build_params(cfg, grid=None, epsilon=None):
    from .energy import EnergyParams

    grid = build_grid(cfg) if grid is None else grid
    return EnergyParams(cfg["epsilon"] if epsilon is None else epsilon, cfg["integrand.delta"],
                        build_potential(cfg), build_integrand(cfg, grid), grid,
                        quad_order=cfg["integrand.quad_order"])


def build_shape(cfg, grid, family=None):
    from .gamma import ShapeSpec

    L = tuple(grid.lengths)
    center = tuple(cfg["gamma.center"]) or tuple(0.5 * l for l in L)
    kw = dict(center=center, radius=cfg["gamma.radius"], axis=cfg["gamma.axis"],
              offsets=tuple(cfg["gamma.offsets"]), lengths=L)
    if cfg["gamma.axes"]:
        kw["axes"] = tuple(cfg["gamma.axes"])
    return ShapeSpec(family or cfg["gamma.shape"], **kw)


def _load_field(path, p):
    from .domain import load_snapshot

    u, grid, _ = load_snapshot(path)
    if tuple(grid.cells) != tuple(p.grid.cells) or tuple(grid.lengths) != tuple(p.grid.lengths):
        raise ValueError(f"snapshot {path} does not match the configured grid")
    return u


# -- subcommands --------------------------------------------------------------------

def cmd_heteroclinic(run: Run, cfg) -> int:
    from .potential import audit_potential, compute_cw, heteroclinic

    W = build_potential(cfg)
    cw = compute_cw(W)
    prof = heteroclinic(W, t_max=cfg["heteroclinic.t_max"])
    run.stage("profile")
    audit = audit_potential(W)
    t = np.linspace(-cfg["heteroclinic.t_max"] / 4, cfg["heteroclinic.t_max"] / 4,
                    cfg["heteroclinic.samples"])
    run.csv("profile.csv", ["t", "U", "dU"], zip(t, prof(t), prof.derivative(t)))
    run.json("heteroclinic.json", {
        "c_W": cw,
        "rate_plus": prof.rate_plus,
        "rate_minus": prof.rate_minus,
        "audit": audit.as_dict(),
    })
    run.stage("report")
    return EXIT_OK if audit.passed else EXIT_CERT


def cmd_audit(run: Run, cfg) -> int:
    from .integrand import audit_integrand
    from .potential import audit_potential, compute_cw

    grid = build_grid(cfg)
    W = build_potential(cfg)
    spec = build_integrand(cfg, grid)
    pa = audit_potential(W)
    ia = audit_integrand(spec, samples=cfg["audit.samples"], seed=cfg["run.seed"])
    run.stage("audit")
    run.json("audit.json", {"potential": pa.as_dict(), "integrand": ia.as_dict(), "c_W": compute_cw(W)})
    return EXIT_OK if pa.passed and ia.passed else EXIT_CERT


def _initial_field(cfg, p):
    from .gamma import clamp_gamma, recovery_field

    init = cfg["minimize.init"]
    if init in ("stripe", "circle", "ellipse"):
        S = build_shape(cfg, p.grid, init)
        gamma = clamp_gamma(S, p.integrand, p.epsilon, 2 * math.log(1 / p.epsilon))
        return recovery_field(S, p, gamma)
    if init == "random":
        rng = np.random.default_rng(cfg["run.seed"])
        return 0.1 * rng.standard_normal(p.grid.shape)
    return _load_field(init, p)


def _critical_summary(u, rep, p):
    return {
        "report": rep.as_dict(),
        "sup_abs": float(np.max(np.abs(u))),
        "nonconstant": bool(np.ptp(u) > 1e-6),
        "epsilon": p.epsilon,
        "delta": p.delta,
    }


def cmd_minimize(run: Run, cfg) -> int:
    from .critical import SolverError, gradient_flow, newton_refine

    p = build_params(cfg)
    u0 = _initial_field(cfg, p)
    u, trace = gradient_flow(u0, p, steps=cfg["minimize.steps"], tol=1e-6)
    run.stage("descent")
    run.csv("descent.csv", ["step", "energy", "residual_sup", "dt"], trace)
    code = EXIT_OK
    try:
        u, rep = newton_refine(u, p, tol=cfg["minimize.tol"], max_iter=cfg["critical.max_iter"],
                               k_eig=cfg["critical.k_eig"])
    except SolverError as exc:
        if not hasattr(exc, "report"):
            raise
        u, rep, code = exc.field, exc.report, EXIT_CERT
    run.stage("newton")
    run.snapshot("minimizer.f64", u, p, tags={"kind": "minimizer"})
    run.json("minimize.json", _critical_summary(u, rep, p))
    if not rep.bounded:
        code = EXIT_CERT
    return code


def cmd_mountain_pass(run: Run, cfg) -> int:
    from .critical import SolverError
    from .minmax import delta_continuation, extract_saddle, init_sweep_path, load_checkpoint, relax_path

    p = build_params(cfg)
    seed = cfg["run.seed"]
    ckpt = run.out / "checkpoint"
    resume_state = None
    if cfg["run.resume"]:
        path, resume_state = load_checkpoint(ckpt, p, seed)
    else:
        path = init_sweep_path(p, cfg["minmax.direction"], cfg["minmax.nodes"],
                               center=cfg["minmax.center"], anchored=cfg["minmax.anchored"])
    run.stage("init")
    stop = cfg["run.stop_after"] or None
    every = cfg["run.checkpoint_every"]
    res = relax_path(path, p, rounds=cfg["minmax.rounds"], tol=cfg["minmax.relax_tol"],
                     climb=cfg["minmax.climb"], checkpoint_dir=ckpt if every else None,
                     checkpoint_every=every, seed=seed, resume_state=resume_state, stop_after=stop)
    run.stage("relax")
    run.csv("relax_log.csv", ["round", "max_energy", "argmax", "residual"], res.log)
    run.csv("path_energies.csv", ["node", "energy"], enumerate(res.path.energies))
    if every:
        run.track_tree(ckpt)
    summary = {"minmax_value": res.value, "argmax": res.argmax, "rounds": res.rounds,
               "relax_residual": res.residual, "relax_converged": res.converged}
    if stop is not None and res.rounds >= stop and not res.converged:
        summary["stopped_early"] = True
        run.json("mountain_pass.json", summary)
        return EXIT_OK
    code = EXIT_OK
    tol = cfg["critical.tol"]
    try:
        u, rep = extract_saddle(res.path, p, tol=tol, max_iter=cfg["critical.max_iter"],
                                k_eig=cfg["critical.k_eig"])
        steps = []
        if cfg["minmax.deltas"]:
            u, steps = delta_continuation(u, p, cfg["minmax.deltas"], tol=tol, k_eig=cfg["critical.k_eig"])
            rep = steps[-1].report
    except SolverError as exc:
        if not hasattr(exc, "report"):
            raise
        u, rep, steps, code = exc.field, exc.report, [], EXIT_CERT
    run.stage("newton")
    summary.update(_critical_summary(u, rep, p))
    summary["continuation"] = [{"delta": s.delta, "energy": s.energy, "residual": s.residual,
                                "c1_change": s.c1_change} for s in steps]
    ok = (rep.converged and rep.bounded and summary["nonconstant"]
          and rep.morse_index is not None and rep.morse_index <= 1)
    summary["certified"] = bool(ok)
    run.snapshot("saddle.f64", u, p, tags={"kind": "saddle"})
    run.json("mountain_pass.json", summary)
    return code if not ok else EXIT_OK


def _default_radii(p):
    half = 0.5 * min(p.grid.lengths)
    lo, hi = 4 * p.epsilon, min(0.25, half)
    return list(np.geomspace(lo, hi, 5)) if lo < hi else [hi]


def cmd_diagnose(run: Run, cfg) -> int:
    from .energy import energy
    from .geomlimits import (build_varifold, density_ratios, modica_check, quantization_summary,
                       slice_quantization, stability_diagnostic, tangential_fraction)
    from .integrand import audit_integrand
    from .potential import compute_cw

    if not cfg["diagnose.input"]:
        raise ValueError("diagnose.input must name a snapshot")
    p = build_params(cfg)
    u = _load_field(cfg["diagnose.input"], p)
    cw = compute_cw(p.potential)
    E = energy(u, p)
    modica = modica_check(u, p)
    V = build_varifold(u, p)
    lam_prime = audit_integrand(p.integrand, samples=cfg["audit.samples"], seed=cfg["run.seed"]).lam_prime
    k = np.unravel_index(int(np.argmax(V.weight)), p.grid.shape)
    x0 = p.grid.coords()[k]
    radii = cfg["diagnose.radii"] or _default_radii(p)
    ratios = density_ratios(V, x0, radii)
    axis = cfg["minmax.direction"]
    d = np.eye(p.grid.n)[axis]
    report = {
        "energy": E,
        "c_W": cw,
        "modica": modica.as_dict(),
        "varifold_mass": V.mass,
        "mass_bound": E / lam_prime,
        "density_center": x0,
        "density_radii": radii,
        "density_ratios": ratios,
        "tangential_fraction": tangential_fraction(u, p, d),
    }
    if p.grid.n >= 2:
        report["slices"] = quantization_summary(slice_quantization(u, p, axis=axis))
    if p.metric.flat and p.delta > 0:
        report["stability"] = stability_diagnostic(u, p).as_dict()
    run.stage("diagnose")
    ok = V.mass <= E / lam_prime and all(0.2 * cw <= r <= 5 * cw for r in ratios)
    report["certified"] = bool(ok)
    run.json("diagnose.json", report)
    return EXIT_OK if ok else EXIT_CERT


def cmd_gamma_sweep(run: Run, cfg) -> int:
    from .gamma import aniso_perimeter, gamma_sweep, gaps_decreasing
    from .potential import compute_cw

    p = build_params(cfg, epsilon=cfg["gamma.epsilons"][0])
    S = build_shape(cfg, p.grid)
    rule = None
    if cfg["gamma.gamma"] > 0:
        g = cfg["gamma.gamma"]
        rule = lambda e: g  # noqa: E731
    rows, _ = gamma_sweep(S, p, cfg["gamma.epsilons"], rule)
    run.stage("sweep")
    run.csv("gamma_sweep.csv", ["epsilon", "gamma", "energy", "target", "gap", "liminf", "tv"],
            [(r.epsilon, r.gamma, r.energy, r.target, r.gap, r.liminf, r.tv) for r in rows])
    decreasing = gaps_decreasing(rows)
    liminf_ok = all(r.liminf <= r.energy for r in rows)
    run.json("gamma_sweep.json", {
        "perimeter": aniso_perimeter(S, p.integrand),
        "c_W": compute_cw(p.potential),
        "final_gap": rows[-1].gap,
        "gaps_decreasing": decreasing,
        "liminf_holds": liminf_ok,
    })
    return EXIT_OK if decreasing and liminf_ok else EXIT_CERT


def cmd_spectrum(run: Run, cfg) -> int:
    from .critical import el_residual, spectrum

    if not cfg["spectrum.input"]:
        raise ValueError("spectrum.input must name a snapshot")
    p = build_params(cfg)
    u = _load_field(cfg["spectrum.input"], p)
    vals, res, idx = spectrum(u, p, k=cfg["critical.k_eig"], seed=cfg["run.seed"])
    run.stage("spectrum")
    r = el_residual(u, p)
    run.json("spectrum.json", {"eigenvalues": vals, "eig_residuals": res, "morse_index": idx,
                               "residual_sup": float(np.max(np.abs(r)))})
    return EXIT_OK


COMMANDS = {
    "heteroclinic": cmd_heteroclinic,
    "audit": cmd_audit,
    "minimize": cmd_minimize,
    "mountain-pass": cmd_mountain_pass,
    "diagnose": cmd_diagnose,
    "gamma-sweep": cmd_gamma_sweep,
    "spectrum": cmd_spectrum,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="anisoac", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
        sp.add_argument("--output", help="output directory (run.output)")
        sp.add_argument("--seed", type=int, help="random seed (run.seed)")
        sp.add_argument("--resume", action="store_true", help="resume from the output checkpoint")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.set)
    if args.output:
        overrides.append(f"run.output={args.output}")
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.resume:
        overrides.append("run.resume=true")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"anisoac: {exc}", file=sys.stderr)
        return EXIT_ERROR
    threads = str(cfg["run.threads"])
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, threads)
    run = Run(args.command, cfg)
    try:
        code = COMMANDS[args.command](run, cfg)
    except Exception as exc:  # operational failure: report and exit 1
        log.debug("failure", exc_info=True)
        print(f"anisoac {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return run.finish(EXIT_ERROR)
    return run.finish(code)


if __name__ == "__main__":
    sys.exit(main())
