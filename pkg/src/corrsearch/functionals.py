"""Energy functionals of (rho, f): Weizsacker, Fisher, Coulomb, totals.

The internal-energy decomposition used throughout is

    T + V_ee = (1/8) int |grad rho|^2 / rho
             + (1/8) int rho(r) int |grad_r f|^2 / f     (nonlocal Fisher)
             + P(N)  int rho(r) E_f[ w(r, r') ]          (Coulomb)

with r' the first satellite and P(N) the pair-counting prefactor.  The
default "half" prefactor (N-1)/2 counts each pair once; the "full"
variant (N-1) is kept switchable for comparison, and the decomposition
identity test adjudicates between them.

The Fisher term is never computed by differentiating an estimated
normalization.  Because the normalization depends on r only, the
conditional score identity

    int |grad_r f|^2 / f = Var_f[ grad_r log f~ | r ]

reduces it to the variance of the unnormalized score over satellite
samples, estimated with the unbiased K/(K-1) correction.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .ansatz import AnsatzError, ConditionalAnsatz, FrozenOrbitalProduct
from .domain import (
    Density,
    DomainError,
    ExternalPotential,
    QuadratureGrid,
    SpaceSpec,
    default_grid,
    external_energy,
    _gauss_legendre,
    _zetas_of,
)
from .sampler import (
    SamplerSettings,
    conditioning_rng,
    run_conditional_batch,
    sample_conditioning_points,
)

PREFACTOR_MODES = ("half", "full")


def prefactor_value(n_electrons: int, mode: str) -> float:
    if mode not in PREFACTOR_MODES:
        raise ValueError(f"prefactor must be one of {PREFACTOR_MODES}, got {mode!r}")
    if mode == "half":
        return (n_electrons - 1) / 2.0
    return float(n_electrons - 1)


# ---------------------------------------------------------------------------
# deterministic terms
# ---------------------------------------------------------------------------


def weizsacker_term(density: Density, grid: QuadratureGrid | None = None) -> float:
    """(1/8) integral of |grad rho|^2 / rho by quadrature."""
    if grid is None:
        grid = default_grid(density)
    rho = density.value(grid.nodes)
    grad = density.gradient(grid.nodes)
    grad2 = np.sum(grad * grad, axis=-1)
    integrand = np.where(rho > 0.0, grad2 / np.where(rho > 0.0, rho, 1.0), 0.0)
    return float(np.sum(grid.weights * integrand) / 8.0)


def radial_pair_integral(q_fn, r_max: float, n_outer: int = 256, n_inner: int = 64) -> float:
    """Double radial integral of q(r) q(r') / max(r, r').

    The kernel has a kink along r = r', so for each outer node the inner
    integral is split there: (1/r) int_0^r q + int_r^R q(s)/s ds, each
    panel under its own Gauss-Legendre rule.  Smooth q then integrates to
    near machine precision instead of the O(n^-2) of a product grid.
    """
    r, wr = _gauss_legendre(n_outer, 0.0, r_max)
    t, wt = np.polynomial.legendre.leggauss(n_inner)
    t = 0.5 * (t + 1.0)
    wt = 0.5 * wt
    s_lo = r[:, None] * t[None, :]
    w_lo = r[:, None] * wt[None, :]
    inner_lo = np.sum(w_lo * q_fn(s_lo), axis=1) / r
    span = (r_max - r)[:, None]
    s_hi = r[:, None] + span * t[None, :]
    w_hi = span * wt[None, :]
    inner_hi = np.sum(w_hi * q_fn(s_hi) / s_hi, axis=1)
    return float(np.sum(wr * q_fn(r) * (inner_lo + inner_hi)))


def frozen_coulomb_quadrature(
    density: Density, prefactor: str = "half", n_radial: int = 256
) -> float:
    """Coulomb term of the frozen-orbital family by radial quadrature.

    For f = prod rho(s_n)/N the satellite distribution is spherically
    symmetric, so the double integral reduces to two radial quadratures
    with the 1/max(r, r') kernel.  3D analytic densities only.
    """
    if density.dim != 3:
        raise DomainError("quadrature Coulomb path is 3D-only; use the MC path")
    r_max = max(20.0, 14.0 / min(_zetas_of(density)))

    def q_fn(s):
        points = np.zeros(s.shape + (3,))
        points[..., 2] = s
        return 4.0 * np.pi * s * s * density.value(points) / density.n_electrons

    pair = radial_pair_integral(q_fn, r_max, n_outer=n_radial)
    return prefactor_value(density.n_electrons, prefactor) * density.n_electrons * pair


# ---------------------------------------------------------------------------
# Monte Carlo conditional moments
# ---------------------------------------------------------------------------


def _bare_kernel(space: SpaceSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Interaction w(x, y): Coulomb in 3D, softened on the line."""
    delta = x - y
    d2 = np.sum(delta * delta, axis=-1)
    if space.dim == 3:
        with np.errstate(divide="ignore"):
            return 1.0 / np.sqrt(d2)
    return 1.0 / np.sqrt(d2 + space.softening**2)


@dataclass
class ConditionalMoments:
    """Per-conditioning-point summaries from shared chains.

    score_var: unbiased conditional score variance per point.
    pair_mean: mean bare interaction with the first satellite per point.
    """

    score_var: np.ndarray
    pair_mean: np.ndarray
    acceptance: float
    sigma_final: float


def conditional_moments(
    density: Density,
    ansatz: ConditionalAnsatz,
    settings: SamplerSettings,
) -> ConditionalMoments:
    """Sample satellites at M_r conditioning points and reduce both
    observables on the same chains (their covariance is kept downstream)."""
    if settings.samples < 2:
        raise ValueError("need at least 2 kept samples for the variance estimate")
    space = ansatz.space
    rng = conditioning_rng(settings.seed)
    r_points = sample_conditioning_points(density, settings.conditioning_points, rng)

    def score_var(r_block, kept):
        n_kept, m = kept.shape[0], kept.shape[1]
        r_rep = np.broadcast_to(r_block, (n_kept, m, space.dim))
        s = ansatz.score(r_rep, kept)
        s_mean = s.mean(axis=0)
        dev = s - s_mean
        return np.sum(dev * dev, axis=(0, -1)) / (n_kept - 1)

    def pair_mean(r_block, kept):
        first = kept[:, :, 0, :]
        vals = _bare_kernel(space, np.broadcast_to(r_block, first.shape), first)
        return vals.mean(axis=0)

    result = run_conditional_batch(
        ansatz, r_points, settings, {"score_var": score_var, "pair_mean": pair_mean}
    )
    # collapse walkers of the same conditioning point before the outer stats
    v = result.values["score_var"].reshape(settings.conditioning_points, settings.walkers)
    c = result.values["pair_mean"].reshape(settings.conditioning_points, settings.walkers)
    return ConditionalMoments(
        score_var=v.mean(axis=1),
        pair_mean=c.mean(axis=1),
        acceptance=result.mean_acceptance,
        sigma_final=float(result.sigma_final.mean()),
    )


@dataclass
class TermEstimate:
    value: float
    stderr: float


@dataclass
class GammaEstimate:
    """Correlation functional Gamma = Fisher + Coulomb with shared-sample errors."""

    fisher: float
    fisher_stderr: float
    coulomb: float
    coulomb_stderr: float
    covariance: float
    value: float
    stderr: float
    prefactor: str
    method: str
    acceptance: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


def _gamma_from_moments(
    moments: ConditionalMoments, n_electrons: int, prefactor: str, method: str
) -> GammaEstimate:
    m = moments.score_var.size
    fisher_scale = n_electrons / 8.0
    coulomb_scale = prefactor_value(n_electrons, prefactor) * n_electrons
    fisher_samples = fisher_scale * moments.score_var
    coulomb_samples = coulomb_scale * moments.pair_mean
    fisher = float(fisher_samples.mean())
    coulomb = float(coulomb_samples.mean())
    if m > 1:
        fisher_se = float(fisher_samples.std(ddof=1) / np.sqrt(m))
        coulomb_se = float(coulomb_samples.std(ddof=1) / np.sqrt(m))
        cov = float(np.cov(fisher_samples, coulomb_samples, ddof=1)[0, 1] / m)
    else:
        fisher_se = coulomb_se = cov = float("nan")
    var_total = fisher_se**2 + coulomb_se**2 + 2.0 * cov
    return GammaEstimate(
        fisher=fisher,
        fisher_stderr=fisher_se,
        coulomb=coulomb,
        coulomb_stderr=coulomb_se,
        covariance=cov,
        value=fisher + coulomb,
        stderr=float(np.sqrt(max(var_total, 0.0))),
        prefactor=prefactor,
        method=method,
        acceptance=moments.acceptance,
    )


def _zero_gamma(prefactor: str, method: str) -> GammaEstimate:
    return GammaEstimate(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, prefactor, method)


def gamma_correlation(
    density: Density,
    ansatz: ConditionalAnsatz,
    settings: SamplerSettings,
    prefactor: str = "half",
    method: str = "auto",
) -> GammaEstimate:
    """Estimate Gamma[f, rho] = Fisher + Coulomb.

    method "mc" runs the two-level sampler; "quadrature" is available for
    the frozen family on 3D analytic densities (score is identically
    zero, so Gamma reduces to a deterministic double integral); "auto"
    picks quadrature exactly in that case.
    """
    if ansatz.n_satellites == 0:
        return _zero_gamma(prefactor, "exact")
    quadrature_ok = (
        isinstance(ansatz, FrozenOrbitalProduct)
        and density.dim == 3
        and density.family in ("exponential", "exponential-mixture")
    )
    use_quadrature = False
    if method == "quadrature":
        if not quadrature_ok:
            raise AnsatzError(
                "quadrature route applies only to the frozen family "
                "on 3D analytic densities; use method 'mc' or 'auto'"
            )
        use_quadrature = True
    elif method == "auto":
        use_quadrature = quadrature_ok
    elif method != "mc":
        raise ValueError(f"unknown method {method!r}")

    if use_quadrature:
        coulomb = frozen_coulomb_quadrature(density, prefactor)
        return GammaEstimate(
            fisher=0.0,
            fisher_stderr=0.0,
            coulomb=coulomb,
            coulomb_stderr=0.0,
            covariance=0.0,
            value=coulomb,
            stderr=0.0,
            prefactor=prefactor,
            method="quadrature",
        )
    moments = conditional_moments(density, ansatz, settings)
    return _gamma_from_moments(moments, ansatz.n_electrons, prefactor, "mc")


def fisher_term(
    density: Density, ansatz: ConditionalAnsatz, settings: SamplerSettings
) -> TermEstimate:
    """(N/8) E_{r ~ rho/N}[ Var_f[score | r] ] by the two-level sampler."""
    if ansatz.n_satellites == 0:
        return TermEstimate(0.0, 0.0)
    est = gamma_correlation(density, ansatz, settings, method="mc")
    return TermEstimate(est.fisher, est.fisher_stderr)


def coulomb_term(
    density: Density,
    ansatz: ConditionalAnsatz,
    settings: SamplerSettings,
    prefactor: str = "half",
) -> TermEstimate:
    """P(N) int rho(r) E_f[w(r, first satellite)] dr by the two-level sampler."""
    if ansatz.n_satellites == 0:
        return TermEstimate(0.0, 0.0)
    est = gamma_correlation(density, ansatz, settings, prefactor=prefactor, method="mc")
    return TermEstimate(est.coulomb, est.coulomb_stderr)


# ---------------------------------------------------------------------------
# total energy
# ---------------------------------------------------------------------------


@dataclass
class EnergyBreakdown:
    """Weizsacker + Fisher + Coulomb + external, with shared-chain errors."""

    weizsacker: float
    fisher: float
    fisher_stderr: float
    coulomb: float
    coulomb_stderr: float
    external: float
    total: float
    total_stderr: float
    prefactor: str
    method: str

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def assemble(
        cls, weizsacker: float, gamma: GammaEstimate, external: float
    ) -> "EnergyBreakdown":
        return cls(
            weizsacker=weizsacker,
            fisher=gamma.fisher,
            fisher_stderr=gamma.fisher_stderr,
            coulomb=gamma.coulomb,
            coulomb_stderr=gamma.coulomb_stderr,
            external=external,
            total=weizsacker + gamma.fisher + gamma.coulomb + external,
            total_stderr=gamma.stderr,
            prefactor=gamma.prefactor,
            method=gamma.method,
        )


def total_energy(
    density: Density,
    ansatz: ConditionalAnsatz,
    potential: ExternalPotential | None,
    settings: SamplerSettings,
    prefactor: str = "half",
    method: str = "auto",
    grid: QuadratureGrid | None = None,
) -> EnergyBreakdown:
    """Full upper-bound energy of (rho, f): deterministic one-body terms
    by quadrature plus the sampled correlation functional."""
    if grid is None:
        grid = default_grid(density)
    w = weizsacker_term(density, grid)
    ext = external_energy(density, potential, grid) if potential is not None else 0.0
    gamma = gamma_correlation(density, ansatz, settings, prefactor=prefactor, method=method)
    return EnergyBreakdown.assemble(w, gamma, ext)
