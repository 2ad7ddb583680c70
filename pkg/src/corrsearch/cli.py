"""Command line interface.

Subcommands:
    energy              evaluate the energy upper bound of a configured pair
    optimize            nested search over density scale and couplings
    compare-ansatz      rank conditional families on one density
    verify              run the exact decomposition cross-checks
    sample-diagnostics  chain health: acceptance, ESS, error bars

Exit codes: 0 success, 1 invalid input, 2 numerical failure,
3 tolerance failure in `verify`.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import shlex
import sys
import time

import numpy as np

from .ansatz import (
    AnsatzError,
    EstimatorError,
    FAMILIES,
    GaussianToy,
    check_conditions,
)
from .config import (
    ConfigError,
    RunConfig,
    build_density,
    build_optimize_spec,
    build_potential,
    build_sampler_settings,
    build_space,
    load_config,
)
from .domain import DomainError
from .functionals import gamma_correlation, prefactor_value, total_energy
from .optimizer import (
    OptimizeError,
    build_ansatz,
    inner_minimize,
    outer_minimize,
)
from .oracle import (
    ProductWavefunction,
    solve_two_particle_1d,
    verify_decomposition_grid,
    verify_decomposition_product,
)
from .records import (
    RunRecord,
    TRACE_COLUMNS,
    run_directory,
    save_record,
    save_trace,
)
from .sampler import conditioning_rng, run_chain
from . import __version__

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_TOLERANCE = 3


def _jsonable(obj):
    """Recursively convert numpy scalars and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        return val if math.isfinite(val) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _add_common(sub: argparse.ArgumentParser, needs_config: bool = True):
    if needs_config:
        sub.add_argument("--config", required=True, help="path to the run config file")
    sub.add_argument("--seed", type=int, default=None, help="override the sampler seed")
    sub.add_argument("--out", default=None, help="output directory (default runs/<stamp>-<seed>)")
    sub.add_argument(
        "--prefactor",
        choices=("half", "full"),
        default="half",
        help="interaction prefactor convention",
    )
    sub.add_argument(
        "--test-mode",
        action="store_true",
        help="lift safety validation (e.g. gamma = 0) for diagnostics",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corrsearch",
        description="Conditional-density energy decomposition and variational search.",
    )
    parser.add_argument("--version", action="version", version=f"corrsearch {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p_energy = subs.add_parser("energy", help="evaluate the energy bound once")
    _add_common(p_energy)
    p_energy.add_argument(
        "--method",
        choices=("auto", "mc", "quadrature"),
        default="auto",
        help="route for the correlation terms",
    )
    p_energy.set_defaults(handler=cmd_energy)

    p_opt = subs.add_parser("optimize", help="nested variational search")
    _add_common(p_opt)
    p_opt.add_argument("--method", choices=("auto", "mc", "quadrature"), default="auto")
    p_opt.set_defaults(handler=cmd_optimize)

    p_cmp = subs.add_parser("compare-ansatz", help="rank families on one density")
    _add_common(p_cmp)
    p_cmp.add_argument(
        "--families",
        default="pairwise,simple,frozen",
        help="comma separated list, at least two of: pairwise, simple, frozen",
    )
    p_cmp.set_defaults(handler=cmd_compare)

    p_ver = subs.add_parser("verify", help="exact decomposition cross-checks")
    _add_common(p_ver, needs_config=False)
    p_ver.add_argument("--zeta", type=float, default=27.0 / 16.0)
    p_ver.add_argument("--n", type=int, default=2, help="electron count of the product state")
    p_ver.add_argument("--grid-points", type=int, default=32)
    p_ver.add_argument("--extent", type=float, default=6.0)
    p_ver.add_argument("--z", type=float, default=2.0, help="1D well depth")
    p_ver.add_argument("--softening", type=float, default=1.0)
    # the boson default keeps the grid residual second order in h; the
    # fermion sector's node line degrades it to first order, so pair
    # --symmetry fermion with a looser --tol-grid
    p_ver.add_argument("--symmetry", choices=("fermion", "boson"), default="boson")
    p_ver.add_argument("--tol-product", type=float, default=1e-3)
    p_ver.add_argument("--tol-grid", type=float, default=1e-2)
    p_ver.set_defaults(handler=cmd_verify)

    p_diag = subs.add_parser("sample-diagnostics", help="chain health report")
    _add_common(p_diag)
    p_diag.add_argument("--points", type=int, default=4, help="conditioning points to probe")
    p_diag.set_defaults(handler=cmd_diagnostics)

    return parser


def _load(args) -> RunConfig:
    overrides = {"prefactor": args.prefactor, "test_mode": args.test_mode}
    if args.seed is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, overrides)


def _ansatz_from_config(cfg: RunConfig, density, space):
    if cfg.ansatz.family == "gaussian-toy":
        return GaussianToy(density, space)
    return build_ansatz(
        cfg.ansatz.family,
        density,
        space,
        cfg.ansatz.gamma,
        cfg.ansatz.beta,
        test_mode=cfg.test_mode,
    )


def _new_record(command: str, cfg: RunConfig) -> RunRecord:
    return RunRecord(
        command=command,
        config=_jsonable(cfg.to_dict()),
        seed=cfg.sampler.seed,
        prefactor=cfg.prefactor,
    )


# ---------------------------------------------------------------------------
# handlers
# ---------------------------------------------------------------------------


def cmd_energy(args) -> int:
    cfg = _load(args)
    space = build_space(cfg)
    density = build_density(cfg)
    potential = build_potential(cfg)
    ansatz = _ansatz_from_config(cfg, density, space)
    settings = build_sampler_settings(cfg)

    t0 = time.perf_counter()
    breakdown = total_energy(
        density, ansatz, potential, settings,
        prefactor=cfg.prefactor, method=args.method,
    )
    elapsed = time.perf_counter() - t0

    record = _new_record(_command_line(args), cfg)
    record.results = _jsonable(
        {
            "family": cfg.ansatz.family,
            "gamma": cfg.ansatz.gamma,
            "beta": cfg.ansatz.beta,
            "breakdown": breakdown.to_dict(),
        }
    )
    record.timings = {"energy_seconds": elapsed}
    outdir = run_directory(args.out, cfg.sampler.seed)
    save_record(record, f"{outdir}/record.json")

    print(f"family              {cfg.ansatz.family}")
    print(f"one-body gradient   {breakdown.weizsacker:+.6f}")
    print(f"nonlocal gradient   {breakdown.fisher:+.6f} (se {breakdown.fisher_stderr:.2e})")
    print(f"interaction         {breakdown.coulomb:+.6f} (se {breakdown.coulomb_stderr:.2e})")
    print(f"external            {breakdown.external:+.6f}")
    print(f"total               {breakdown.total:+.6f} (se {breakdown.total_stderr:.2e})")
    print(f"record              {outdir}/record.json")
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = _load(args)
    if cfg.density.family != "exponential":
        raise ConfigError(
            "[density] field 'family': the nested search varies the exponential scale"
        )
    if cfg.ansatz.family not in ("pairwise", "simple", "frozen"):
        raise ConfigError("[ansatz] field 'family': not searchable")
    if args.method == "quadrature" and (
        cfg.ansatz.family != "frozen" or cfg.system.dimensionality != "3d"
    ):
        raise ConfigError(
            "--method quadrature applies only to the frozen family on 3d densities"
        )
    space = build_space(cfg)
    potential = build_potential(cfg)
    settings = build_sampler_settings(cfg)
    opt = build_optimize_spec(cfg)
    outdir = run_directory(args.out, cfg.sampler.seed)
    record = _new_record(_command_line(args), cfg)

    t0 = time.perf_counter()
    try:
        result = outer_minimize(
            lambda z: build_density(cfg, zeta=z),
            potential,
            space,
            cfg.ansatz.family,
            settings,
            opt,
            prefactor=cfg.prefactor,
            method=args.method,
        )
    except (Exception, KeyboardInterrupt) as exc:
        record.status = "partial"
        record.results = {"error": f"{type(exc).__name__}: {exc}"}
        record.timings = {"optimize_seconds": time.perf_counter() - t0}
        save_record(record, f"{outdir}/record.json")
        save_trace([], f"{outdir}/trace.csv")
        print(f"search aborted: {exc}", file=sys.stderr)
        print(f"partial record      {outdir}/record.json", file=sys.stderr)
        return EXIT_NUMERICAL

    record.results = _jsonable(
        {
            "zeta": result.zeta,
            "gamma": result.gamma,
            "beta": result.beta,
            "breakdown": result.energy.to_dict(),
            "n_eval": result.n_eval,
            "converged": result.converged,
        }
    )
    record.timings = {"optimize_seconds": time.perf_counter() - t0}
    save_record(record, f"{outdir}/record.json")
    save_trace(result.trace, f"{outdir}/trace.csv", TRACE_COLUMNS)

    print(f"zeta*               {result.zeta:.6f}")
    if not math.isnan(result.gamma):
        print(f"gamma*              {result.gamma:.6f}")
        print(f"beta*               {result.beta:.6f}")
    print(f"energy              {result.energy.total:+.6f} (se {result.energy.total_stderr:.2e})")
    print(f"evaluations         {result.n_eval}")
    print(f"record              {outdir}/record.json")
    print(f"trace               {outdir}/trace.csv")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    families = [f.strip() for f in args.families.split(",") if f.strip()]
    if len(families) < 2:
        raise ConfigError("--families needs at least two entries")
    for fam in families:
        if fam not in ("pairwise", "simple", "frozen"):
            raise ConfigError(f"--families: {fam!r} is not comparable")

    space = build_space(cfg)
    density = build_density(cfg)
    settings = build_sampler_settings(cfg)
    opt = build_optimize_spec(cfg)

    entries = []
    for fam in families:
        inner = inner_minimize(
            density, space, fam, settings, opt, prefactor=cfg.prefactor, method="auto"
        )
        g = inner.gamma if not math.isnan(inner.gamma) else cfg.ansatz.gamma
        b = inner.beta if not math.isnan(inner.beta) else cfg.ansatz.beta
        ansatz = build_ansatz(fam, density, space, g, b)
        report = check_conditions(ansatz, seed=cfg.sampler.seed)
        entries.append(
            {
                "family": fam,
                "gamma": inner.gamma,
                "beta": inner.beta,
                "value": inner.estimate.value,
                "stderr": inner.estimate.stderr,
                "method": inner.estimate.method,
                "conditions": {
                    "normalized": report.normalization_pass,
                    "vanishes_at_conditioning": report.vanishes_at_conditioning,
                    "vanishes_at_satellite_pairs": report.vanishes_at_satellite_pairs,
                    "fermionic_compatible": report.fermionic_compatible,
                    "all_pass": report.all_pass,
                },
            }
        )

    entries.sort(key=lambda e: e["value"])
    for i, entry in enumerate(entries):
        entry["rank"] = i + 1
        if i == 0:
            entry["tied_with_previous"] = False
        else:
            prev = entries[i - 1]
            gap = entry["value"] - prev["value"]
            scale = math.sqrt(entry["stderr"] ** 2 + prev["stderr"] ** 2)
            entry["tied_with_previous"] = gap <= 3.0 * scale

    record = _new_record(_command_line(args), cfg)
    record.results = _jsonable({"ranking": entries})
    outdir = run_directory(args.out, cfg.sampler.seed)
    save_record(record, f"{outdir}/record.json")

    print(f"{'rank':<5}{'family':<10}{'Gamma':>12}{'stderr':>11}  flags")
    for entry in entries:
        flags = []
        if entry["tied_with_previous"]:
            flags.append("~tied-with-previous")
        cond = entry["conditions"]
        if not cond["all_pass"]:
            flags.append("conditions-fail")
        if not cond["fermionic_compatible"]:
            flags.append("not-fermionic")
        print(
            f"{entry['rank']:<5}{entry['family']:<10}"
            f"{entry['value']:>12.6f}{entry['stderr']:>11.2e}  {' '.join(flags)}"
        )
    print(f"record              {outdir}/record.json")
    return EXIT_OK


def cmd_verify(args) -> int:
    product = verify_decomposition_product(ProductWavefunction(args.zeta, args.n))
    wave = solve_two_particle_1d(
        args.grid_points,
        args.extent,
        lambda x: -args.z / np.sqrt(x * x + args.softening**2),
        softening=args.softening,
        symmetry=args.symmetry,
    )
    grid = verify_decomposition_grid(wave)

    pref = prefactor_value(args.n, "half")
    decomposed = product.weizsacker + product.fisher + pref * product.coulomb_expectation
    print(f"product state (zeta={args.zeta:g}, n={args.n})")
    print(f"  internal direct   {product.lhs_internal:+.8f}")
    print(f"  decomposed        {decomposed:+.8f}")
    print(f"  residual          {product.residual_half:.2e} (tol {args.tol_product:.1e})")
    print(f"1d grid state ({args.symmetry}, M={args.grid_points})")
    print(f"  internal direct   {grid.lhs_internal:+.8f}")
    print(f"  residual          {grid.residual_half:.2e} (tol {args.tol_grid:.1e})")

    record = RunRecord(
        command=_command_line(args),
        config={
            "zeta": args.zeta,
            "n": args.n,
            "grid_points": args.grid_points,
            "extent": args.extent,
            "z": args.z,
            "softening": args.softening,
            "symmetry": args.symmetry,
        },
        seed=0,
        prefactor=args.prefactor,
    )
    record.results = _jsonable(
        {
            "product": dataclasses.asdict(product),
            "grid": dataclasses.asdict(grid),
        }
    )
    if args.out:
        outdir = run_directory(args.out, 0)
        save_record(record, f"{outdir}/record.json")
        print(f"record              {outdir}/record.json")

    ok = (
        product.residual(args.prefactor) <= args.tol_product
        and grid.residual(args.prefactor) <= args.tol_grid
    )
    if not ok:
        print("verification FAILED tolerance", file=sys.stderr)
        return EXIT_TOLERANCE
    print("verification passed")
    return EXIT_OK


def cmd_diagnostics(args) -> int:
    cfg = _load(args)
    space = build_space(cfg)
    density = build_density(cfg)
    ansatz = _ansatz_from_config(cfg, density, space)
    settings = build_sampler_settings(cfg)

    rng = conditioning_rng(settings.seed)
    n_probe = max(1, min(args.points, settings.conditioning_points))
    r_points = density.sample(n_probe, rng)

    def spread(r, satellites):
        return float(np.mean(np.sum((satellites - r) ** 2, axis=-1)))

    rows = []
    for idx, r in enumerate(r_points):
        est = run_chain(ansatz, r, settings, spread, stream_index=idx)
        rows.append(
            {
                "r_norm": float(np.linalg.norm(r)),
                "mean_square_spread": est.mean,
                "stderr": est.stderr,
                "ess": est.ess,
                "ess_fraction": est.ess / est.n_samples,
                "acceptance": est.acceptance,
            }
        )

    gamma = gamma_correlation(
        density, ansatz, settings, prefactor=cfg.prefactor, method="mc"
    )

    record = _new_record(_command_line(args), cfg)
    record.results = _jsonable(
        {
            "chains": rows,
            "gamma": gamma.to_dict(),
        }
    )
    outdir = run_directory(args.out, cfg.sampler.seed)
    save_record(record, f"{outdir}/record.json")

    print(f"{'|r|':>8}{'E[d^2]':>12}{'stderr':>11}{'ESS':>9}{'ESS/n':>8}{'accept':>9}")
    for row in rows:
        print(
            f"{row['r_norm']:>8.3f}{row['mean_square_spread']:>12.5f}"
            f"{row['stderr']:>11.2e}{row['ess']:>9.1f}"
            f"{row['ess_fraction']:>8.2f}{row['acceptance']:>9.3f}"
        )
    print(
        f"correlation term    {gamma.value:+.6f} (se {gamma.stderr:.2e}, "
        f"acceptance {gamma.acceptance:.3f})"
    )
    print(f"record              {outdir}/record.json")
    return EXIT_OK


def _command_line(args) -> str:
    argv = getattr(args, "_raw_argv", None)
    if argv is None:
        return args.command
    return "corrsearch " + " ".join(shlex.quote(a) for a in argv)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_VALIDATION
    args._raw_argv = list(argv)
    try:
        return args.handler(args)
    except (ConfigError, DomainError, AnsatzError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (EstimatorError, OptimizeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
