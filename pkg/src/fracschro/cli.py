"""Command line front end: ``fracschro {spectrum,verify,measure,runge,invert}``.

Exit codes: 0 success, 1 invariant failure, 2 config or input error,
3 solver stagnation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as C
from .forward import assemble, solver_diagnostics, write_diagnostics
from .fractional import save_field_binary, save_field_csv
from .inversion import (
    GaussNewtonConfig,
    gauss_newton_recover,
    linearized_recover,
    relative_error,
)
from .measurement import (
    MeasurementBundle,
    SupportError,
    build_source_basis,
    bundle_from_map,
    gram_matrix,
    load_bundle,
    save_bundle,
)
from .runge import RungeProblem, adjoint_certificate, approximate, density_sweep, write_sweep_metadata
from .spectral import Region, SpectrumError, export_eigenvalues_csv, save_spectrum
from .verify import run_suite

log = logging.getLogger("fracschro")

EXIT_OK, EXIT_INVARIANT, EXIT_INPUT, EXIT_STAGNATION = 0, 1, 2, 3


class InputError(Exception):
    pass


def _dump(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _outdir(cfg: C.ExperimentConfig, override: str | None) -> Path:
    d = Path(override) if override else cfg.resolve(cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _setup(cfg: C.ExperimentConfig):
    spectrum = C.build_spectrum(cfg)
    region = C.build_region_from_spec(spectrum, cfg.region, cfg)
    return spectrum, region


def _select_potential(cfg: C.ExperimentConfig) -> C.PotentialSpec:
    pots = cfg.potentials
    if not pots:
        raise C.ConfigError("config.potentials: at least one potential is required")
    name = cfg.measure.potential
    if name is None:
        if len(pots) != 1:
            raise C.ConfigError("config.measure.potential: choose one of several potentials")
        return pots[0]
    for p in pots:
        if p.name == name:
            return p
    raise C.ConfigError(f"config.measure.potential: no potential named {name!r}")


def cmd_spectrum(cfg, out: Path, rng, threads: int) -> int:
    spectrum = C.build_spectrum(cfg)
    manifest = save_spectrum(spectrum, out / "spectrum")
    export_eigenvalues_csv(spectrum, out / "spectrum" / "eigenvalues.csv")
    res, pair = spectrum.orthonormality_residual()
    _dump(out / "spectrum" / "summary.json", {
        "manifest": manifest.name,
        "num_modes": spectrum.num_modes,
        "num_points": spectrum.num_points,
        "volume": spectrum.volume,
        "orthonormality_residual": res,
        "worst_pair": list(pair),
    })
    return EXIT_OK


def cmd_verify(cfg, out: Path, rng, threads: int) -> int:
    spectrum, region = _setup(cfg)
    if len(cfg.potentials) < 2:
        raise C.ConfigError("config.potentials: verify needs two potentials")
    pots = [C.build_potential(spectrum, p, cfg) for p in cfg.potentials[:2]]
    ops = [assemble(spectrum, v, cfg.s) for v in pots]
    basis = build_source_basis(spectrum, region, cfg.basis.kind, cfg.basis.m)
    checks = run_suite(spectrum, cfg.s, ops[0], ops[1], basis, rng, cfg.verify.trials, cfg.verify.tolerance)
    ok = all(c.passed for c in checks)
    _dump(out / "verify_report.json", {
        "passed": ok,
        "s": cfg.s,
        "num_modes": spectrum.num_modes,
        "potentials": [p.name for p in cfg.potentials[:2]],
        "checks": [c.to_dict() for c in checks],
    })
    for c in checks:
        log.info("%-24s %s  max residual %.3e (tol %.1e)", c.name, "PASS" if c.passed else "FAIL", c.max_residual, c.tolerance)
    return EXIT_OK if ok else EXIT_INVARIANT


def measure_bundle(cfg, rng, threads: int = 1) -> tuple[MeasurementBundle, dict, np.ndarray]:
    spectrum, region = _setup(cfg)
    pspec = _select_potential(cfg)
    V = C.build_potential(spectrum, pspec, cfg)
    op = assemble(spectrum, V, cfg.s)
    basis = build_source_basis(spectrum, region, cfg.basis.kind, cfg.basis.m)
    smap = gram_matrix(op, basis, threads=threads)
    bundle = bundle_from_map(smap)
    if cfg.measure.noise > 0:
        bundle = add_gram_noise(bundle, cfg.measure.noise, rng)
    diag = solver_diagnostics(op)
    diag["gram_symmetry_residual"] = smap.symmetry_residual
    diag["numerical_rank"] = bundle.numerical_rank()
    diag["potential"] = pspec.name
    return bundle, diag, V.values


def add_gram_noise(bundle: MeasurementBundle, sigma: float, rng) -> MeasurementBundle:
    """Symmetric additive Gaussian perturbation of the Gram matrix, scaled by its max entry.

    The restricted solutions are perturbed consistently by solving for them
    through the basis mass matrix on the region.
    """
    g = bundle.gram
    e = rng.standard_normal(g.shape) * sigma * np.max(np.abs(g))
    e = 0.5 * (e + e.T)
    w = bundle.spectrum.weights[bundle.region.mask]
    fb = bundle.basis.samples[:, bundle.region.mask] * w
    # minimum-norm change of the restricted solutions reproducing the Gram change
    delta = np.linalg.lstsq(fb, e, rcond=None)[0]
    sols = bundle.restricted_solutions + delta.T
    return MeasurementBundle(bundle.gram_from_solutions(sols), sols, bundle.basis, bundle.s)


def cmd_measure(cfg, out: Path, rng, threads: int) -> int:
    bundle, diag, v = measure_bundle(cfg, rng, threads)
    bdir = out / "bundle"
    save_bundle(bundle, bdir)
    write_diagnostics(diag, out / "solver_diagnostics.json")
    save_field_binary(v, out / "potential.f64")
    save_field_csv(bundle.spectrum, {"V": v}, out / "potential.csv")
    return EXIT_OK


def cmd_runge(cfg, out: Path, rng, threads: int) -> int:
    spectrum, region = _setup(cfg)
    if not cfg.runge.targets:
        raise C.ConfigError("config.runge.targets: at least one target is required")
    pspec = _select_potential(cfg)
    op = assemble(spectrum, C.build_potential(spectrum, pspec, cfg), cfg.s)
    basis = build_source_basis(spectrum, region, cfg.basis.kind, cfg.basis.m)
    targets = {t.name: C.target_values(spectrum, region, t, cfg) for t in cfg.runge.targets}
    first = next(iter(targets.values()))
    problem = RungeProblem.from_operator(op, basis, first, cfg.runge.alphas[0], cfg.runge.norm)
    table = density_sweep(problem, targets, cfg.runge.alphas, threads=threads)
    table.write_csv(out / "runge_sweep.csv")
    certificates = []
    for name, h in targets.items():
        for a in cfg.runge.alphas:
            res = approximate(problem.with_target(h, a))
            cert = adjoint_certificate(op, basis, res.residual)
            certificates.append({"target_id": name, "alpha": a, **cert})
    bad = table.monotone_violations()
    write_sweep_metadata(out / "runge_meta.json", {
        "s": cfg.s,
        "norm": cfg.runge.norm,
        "m": basis.count,
        "alphas": cfg.runge.alphas,
        "targets": list(targets),
        "potential": pspec.name,
        "monotone": not bad,
        "monotone_violations": bad,
        "adjoint_certificates": certificates,
    })
    return EXIT_OK if not bad else EXIT_INVARIANT


def cmd_invert(cfg, out: Path, rng, threads: int) -> int:
    inv = cfg.inversion
    try:
        bundle = load_bundle(cfg.resolve(inv.bundle))
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from None
    sp, region = bundle.spectrum, bundle.region
    payload = {"mode": inv.mode}
    if inv.mode == "linearized":
        if not inv.bundle2:
            raise C.ConfigError("config.inversion.bundle2: required for linearized mode")
        try:
            bundle2 = load_bundle(cfg.resolve(inv.bundle2))
        except FileNotFoundError as exc:
            raise InputError(str(exc)) from None
        res = linearized_recover(bundle, bundle2, alpha=inv.alpha, num_probes=inv.num_probes)
        recovered = region.extend_by_zero(res.delta_v)
        support = region
        payload.update({
            "support_mode": "inside-O",
            "assumption": res.assumption,
            "moments": [float(d) for d in res.moments],
            "probes": res.probe_names,
            "probe_rank": res.probe_rank,
            "beta": res.beta,
            "runge_errors": res.runge_errors,
            "config": {"alpha": inv.alpha, "num_probes": inv.num_probes},
        })
        stagnated = False
    else:
        if inv.init is None:
            raise C.ConfigError("config.inversion.init: required for gauss-newton mode")
        v_init = C.build_potential(sp, inv.init, cfg)
        if inv.support == "inside":
            support = region
        else:
            comp = region.complement()
            idx = comp.indices if inv.unknown_points is None else np.asarray(inv.unknown_points)
            if np.any(region.mask[idx]):
                raise C.ConfigError("config.inversion.unknown_points: must lie outside the region")
            support = Region(np.isin(np.arange(sp.num_points), idx), "unknown")
        gn = GaussNewtonConfig(max_iter=inv.max_iter, beta=inv.beta, tol=inv.tol)
        result = gauss_newton_recover(
            bundle, v_init, support, gn, "inside-O" if inv.support == "inside" else "outside-O"
        )
        recovered = result.V_recovered.values
        stagnated = result.stagnated
        payload.update(result.to_dict(gn))
    if inv.ground_truth:
        truth = C.load_field(sp, cfg.resolve(inv.ground_truth))
        w = sp.weights[support.mask]
        payload["relative_error"] = relative_error(recovered[support.mask], truth[support.mask], w)
    path = out / "inversion_result.json"
    _dump(path, payload)
    save_field_binary(recovered, out / "recovered.f64")
    save_field_csv(sp, {"recovered": recovered}, out / "recovered.csv")
    return EXIT_STAGNATION if stagnated else EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "verify": cmd_verify,
    "measure": cmd_measure,
    "runge": cmd_runge,
    "invert": cmd_invert,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracschro", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed for randomised choices (u64)")
        p.add_argument("--threads", type=int, default=1)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = C.load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise C.ConfigError("--seed: must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.threads < 1:
            raise C.ConfigError("--threads: must be positive")
        out = _outdir(cfg, args.out)
        rng = np.random.default_rng(cfg.seed)
        return COMMANDS[args.command](cfg, out, rng, args.threads)
    except (C.ConfigError, SpectrumError, SupportError, InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        # invalid physical input such as a negative potential sample
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
