"""Independent reference routes: direct expectations and grid searches.

This module owns the machinery that validates the sampled functionals
against quantities computed another way:

* product wavefunctions with exponential orbitals, where kinetic and
  interaction expectations reduce to radial quadratures;
* exact diagonalization of the two-particle softened-interaction
  Hamiltonian on a 1D grid;
* the decomposition identity <T + V_ee> = Weizsacker + Fisher + Coulomb
  evaluated on the conditional density extracted from a wavefunction;
* a brute-force minimization of the discrete correlation functional over
  row-stochastic f tables, which lower-bounds any parametric family on
  the same grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DomainError
from .functionals import prefactor_value, radial_pair_integral

_EPS_F = 1e-13  # floor protecting 1/f in the discrete Fisher term


# ---------------------------------------------------------------------------
# reference wavefunctions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProductWavefunction:
    """N-fold product of the exponential orbital phi = sqrt(zeta^3/pi) e^(-zeta r)."""

    zeta: float
    n_electrons: int

    def __post_init__(self):
        if self.zeta <= 0.0 or self.n_electrons < 2:
            raise DomainError("need zeta > 0 and N >= 2")

    def orbital_sq(self, r: np.ndarray) -> np.ndarray:
        return self.zeta**3 / np.pi * np.exp(-2.0 * self.zeta * np.asarray(r))


@dataclass
class Grid1DWavefunction:
    """Two-particle amplitudes psi(x_i, x_j) on a uniform 1D grid."""

    x: np.ndarray
    psi: np.ndarray
    softening: float

    def __post_init__(self):
        m = self.x.size
        if self.psi.shape != (m, m):
            raise DomainError("psi must be (M, M)")
        self.h = float(self.x[1] - self.x[0])
        norm = float(np.sum(self.psi**2) * self.h**2)
        self.psi = self.psi / np.sqrt(norm)

    @property
    def n_electrons(self) -> int:
        return 2

    def density(self) -> np.ndarray:
        """rho on the grid: N * h * sum_x' psi^2."""
        return 2.0 * self.h * np.sum(self.psi**2, axis=1)

    def conditional_table(self) -> np.ndarray:
        """f(x' | x) as an (M, M) table; rows h-sum to 1 where rho > 0."""
        rho = self.density()
        with np.errstate(invalid="ignore", divide="ignore"):
            f = 2.0 * self.psi**2 / rho[:, None]
        return np.where(rho[:, None] > 0.0, f, 0.0)


# ---------------------------------------------------------------------------
# direct expectations (left-hand route)
# ---------------------------------------------------------------------------


@dataclass
class DirectExpectation:
    kinetic: float
    interaction: float

    @property
    def internal(self) -> float:
        return self.kinetic + self.interaction


def _radial_nodes(zeta: float, n: int = 256):
    r_max = max(20.0, 14.0 / zeta)
    t, wt = np.polynomial.legendre.leggauss(n)
    r = 0.5 * r_max * (t + 1.0)
    return r, 0.5 * r_max * wt


def _orbital_pair_integral(w: ProductWavefunction) -> float:
    """int int |phi|^2 |phi|^2 / r_12 over two orbital clouds (= 5 zeta / 8)."""
    r_max = max(20.0, 14.0 / w.zeta)
    q_fn = lambda s: 4.0 * np.pi * s * s * w.orbital_sq(s)
    return radial_pair_integral(q_fn, r_max)


def direct_expectation_product(w: ProductWavefunction) -> DirectExpectation:
    """<T> and <V_ee> of the product state by radial quadrature.

    T = N/2 int |grad phi|^2 with |grad phi|^2 = zeta^2 phi^2, and V_ee
    sums the identical pair integrals of |phi|^2 with the 1/max(r, r')
    angular average of the Coulomb kernel.
    """
    r, wr = _radial_nodes(w.zeta)
    q = 4.0 * np.pi * r * r * w.orbital_sq(r)  # radial probability density
    kinetic = w.n_electrons * 0.5 * w.zeta**2 * float(np.sum(wr * q))
    pair = _orbital_pair_integral(w)
    n_pairs = w.n_electrons * (w.n_electrons - 1) // 2
    return DirectExpectation(kinetic=kinetic, interaction=n_pairs * pair)


def fd_matrix(m: int, h: float) -> np.ndarray:
    """First-derivative stencil: central inside, one-sided at the edges."""
    a = np.zeros((m, m))
    for i in range(1, m - 1):
        a[i, i - 1] = -0.5 / h
        a[i, i + 1] = 0.5 / h
    a[0, 0], a[0, 1] = -1.0 / h, 1.0 / h
    a[-1, -2], a[-1, -1] = -1.0 / h, 1.0 / h
    return a


def soft_kernel(x: np.ndarray, softening: float) -> np.ndarray:
    """w(x, x') = 1/sqrt((x-x')^2 + a^2) as an (M, M) table."""
    dx = x[:, None] - x[None, :]
    return 1.0 / np.sqrt(dx * dx + softening**2)


def direct_expectation_grid(w: Grid1DWavefunction) -> DirectExpectation:
    """<T> and <V_ee> on the grid with the shared derivative stencil."""
    a = fd_matrix(w.x.size, w.h)
    d1 = a @ w.psi
    d2 = w.psi @ a.T
    kinetic = 0.5 * float(np.sum(d1 * d1 + d2 * d2)) * w.h**2
    vee = float(np.sum(w.psi**2 * soft_kernel(w.x, w.softening))) * w.h**2
    return DirectExpectation(kinetic=kinetic, interaction=vee)


# ---------------------------------------------------------------------------
# exact diagonalization of the 1D two-particle problem
# ---------------------------------------------------------------------------


def solve_two_particle_1d(
    n_points: int,
    extent: float,
    potential,
    softening: float = 1.0,
    symmetry: str = "fermion",
) -> Grid1DWavefunction:
    """Ground state of H = -(1/2)(d2/dx1^2 + d2/dx2^2) + v(x1) + v(x2) + w(x1-x2).

    Three-point Laplacian with Dirichlet boundaries on [-extent, extent].
    `potential` maps an (M,) position array to v values.  symmetry
    "fermion" restricts to the antisymmetric two-particle sector,
    "boson" to the symmetric one.
    """
    if n_points < 4 or n_points > 64:
        raise DomainError("grid oracle supports 4..64 points")
    if symmetry not in ("fermion", "boson"):
        raise DomainError(f"unknown symmetry {symmetry!r}")
    m = n_points
    x = np.linspace(-extent, extent, m)
    h = x[1] - x[0]
    v = np.asarray(potential(x), dtype=float)

    kin = np.zeros((m, m))
    np.fill_diagonal(kin, 1.0 / h**2)
    idx = np.arange(m - 1)
    kin[idx, idx + 1] = kin[idx + 1, idx] = -0.5 / h**2

    eye = np.eye(m)
    ham = np.kron(kin, eye) + np.kron(eye, kin)
    ham += np.diag((v[:, None] + v[None, :] + soft_kernel(x, softening)).ravel())

    # basis of the requested exchange sector
    if symmetry == "fermion":
        pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
        basis = np.zeros((m * m, len(pairs)))
        for k, (i, j) in enumerate(pairs):
            basis[i * m + j, k] = 1.0 / np.sqrt(2.0)
            basis[j * m + i, k] = -1.0 / np.sqrt(2.0)
    else:
        pairs = [(i, j) for i in range(m) for j in range(i, m)]
        basis = np.zeros((m * m, len(pairs)))
        for k, (i, j) in enumerate(pairs):
            if i == j:
                basis[i * m + j, k] = 1.0
            else:
                basis[i * m + j, k] = 1.0 / np.sqrt(2.0)
                basis[j * m + i, k] = 1.0 / np.sqrt(2.0)

    h_sector = basis.T @ ham @ basis
    eigvals, eigvecs = np.linalg.eigh(h_sector)
    psi = (basis @ eigvecs[:, 0]).reshape(m, m)
    return Grid1DWavefunction(x=x, psi=psi, softening=softening)


_RHO_FLOOR = 1e-12


def extract_f(w, r):
    """Conditional satellite density f(. | r) extracted from a wavefunction.

    Product form: r is a position or radius; returns a callable mapping
    satellite arrays (..., S, d) or radii (..., S) to f values, which by
    the algebra of the product state do not depend on r.  Grid form: r is
    a node index; returns that row of the conditional table.  Raises when
    rho(r) is too small to condition on.
    """
    if isinstance(w, ProductWavefunction):
        radius = float(np.sqrt(np.sum(np.square(np.asarray(r, dtype=float)))))
        rho_r = w.n_electrons * w.orbital_sq(radius)
        if rho_r < _RHO_FLOOR:
            raise DomainError("conditional density undefined: rho(r) below 1e-12")

        def f_value(satellites):
            satellites = np.asarray(satellites, dtype=float)
            if satellites.ndim >= 2 and satellites.shape[-1] in (1, 3):
                radii = np.sqrt(np.sum(satellites**2, axis=-1))
            else:
                radii = satellites
            return np.prod(w.orbital_sq(radii), axis=-1)

        return f_value
    if isinstance(w, Grid1DWavefunction):
        i = int(r)
        if w.density()[i] < _RHO_FLOOR:
            raise DomainError("conditional density undefined: rho(r) below 1e-12")
        return w.conditional_table()[i]
    raise DomainError(f"unsupported wavefunction form {type(w).__name__}")


# ---------------------------------------------------------------------------
# decomposition identity
# ---------------------------------------------------------------------------


@dataclass
class DecompositionReport:
    """Both routes to the internal energy plus residuals per prefactor."""

    lhs_internal: float
    weizsacker: float
    fisher: float
    coulomb_expectation: float  # int rho(r) E_f[w] dr, before the prefactor
    residual_half: float
    residual_full: float

    def residual(self, prefactor: str) -> float:
        return self.residual_half if prefactor == "half" else self.residual_full


def _residuals(lhs: float, w: float, fisher: float, expect: float, n: int):
    rhs_half = w + fisher + prefactor_value(n, "half") * expect
    rhs_full = w + fisher + prefactor_value(n, "full") * expect
    return abs(lhs - rhs_half), abs(lhs - rhs_full)


def verify_decomposition_product(w: ProductWavefunction) -> DecompositionReport:
    """Decomposition check for the product state.

    The extracted conditional density f = prod |phi(s_n)|^2 does not
    depend on the conditioning point, so the Fisher term vanishes and
    the Coulomb expectation is (N-1) identical orbital pair integrals
    per unit prefactor.
    """
    direct = direct_expectation_product(w)
    r, wr = _radial_nodes(w.zeta)
    rho_amp = w.n_electrons * w.orbital_sq(r)
    # |rho'|^2 / rho = (2 zeta)^2 rho for the exponential profile
    weiz = float(np.sum(wr * 4.0 * np.pi * r * r * 4.0 * w.zeta**2 * rho_amp)) / 8.0
    pair = _orbital_pair_integral(w)
    # int rho(r) E_f[w(r, first satellite)] dr: rho carries the factor N
    expect = w.n_electrons * pair
    res_half, res_full = _residuals(
        direct.internal, weiz, 0.0, expect, w.n_electrons
    )
    return DecompositionReport(
        lhs_internal=direct.internal,
        weizsacker=weiz,
        fisher=0.0,
        coulomb_expectation=expect,
        residual_half=res_half,
        residual_full=res_full,
    )


def grid_weizsacker(x: np.ndarray, rho: np.ndarray) -> float:
    h = float(x[1] - x[0])
    drho = fd_matrix(x.size, h) @ rho
    integrand = np.where(rho > 0.0, drho**2 / np.where(rho > 0.0, rho, 1.0), 0.0)
    return float(np.sum(integrand) * h / 8.0)


def grid_fisher(x: np.ndarray, rho: np.ndarray, f_table: np.ndarray) -> float:
    """(1/8) sum_x rho(x) sum_x' (D_x f)^2 / f, off-diagonal entries only.

    The diagonal is excluded: feasible tables vanish there, and for
    node-bearing wavefunctions the continuum integrand stays finite, so
    the excluded strip contributes O(h) consistently on both sides of
    any comparison made with this routine.
    """
    m = x.size
    h = float(x[1] - x[0])
    g = fd_matrix(m, h) @ f_table
    off = ~np.eye(m, dtype=bool)
    safe = np.maximum(f_table, _EPS_F)
    integrand = np.where(off & (f_table > 0.0), g * g / safe, 0.0)
    return float(np.sum(rho[:, None] * integrand) * h * h / 8.0)


def grid_coulomb_expectation(x, rho, f_table, softening) -> float:
    """sum_x rho(x) sum_x' f(x'|x) w(x - x'), before the prefactor."""
    h = float(x[1] - x[0])
    return float(np.sum(rho[:, None] * f_table * soft_kernel(x, softening)) * h * h)


def verify_decomposition_grid(w: Grid1DWavefunction) -> DecompositionReport:
    direct = direct_expectation_grid(w)
    rho = w.density()
    f = w.conditional_table()
    weiz = grid_weizsacker(w.x, rho)
    fisher = grid_fisher(w.x, rho, f)
    expect = grid_coulomb_expectation(w.x, rho, f, w.softening)
    res_half, res_full = _residuals(direct.internal, weiz, fisher, expect, 2)
    return DecompositionReport(
        lhs_internal=direct.internal,
        weizsacker=weiz,
        fisher=fisher,
        coulomb_expectation=expect,
        residual_half=res_half,
        residual_full=res_full,
    )


# ---------------------------------------------------------------------------
# brute-force inner minimization on the grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSystem1D:
    """Fixed density on a uniform 1D grid; the arena for exhaustive search."""

    x: np.ndarray
    rho: np.ndarray
    softening: float = 1.0

    def __post_init__(self):
        if self.x.ndim != 1 or self.x.shape != self.rho.shape:
            raise DomainError("x and rho must be matching 1D arrays")
        if self.x.size > 64:
            raise DomainError("grid oracle supports at most 64 points")
        if np.any(self.rho < 0.0):
            raise DomainError("rho must be non-negative")

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def n_electrons(self) -> int:
        return 2


def system_from_wavefunction(w: Grid1DWavefunction) -> GridSystem1D:
    return GridSystem1D(x=w.x, rho=w.density(), softening=w.softening)


def system_from_density_values(x, rho, softening=1.0, n_electrons=2) -> GridSystem1D:
    x = np.asarray(x, dtype=float)
    rho = np.asarray(rho, dtype=float)
    h = x[1] - x[0]
    total = float(rho.sum() * h)
    if total <= 0.0:
        raise DomainError("density has no mass")
    return GridSystem1D(x=x, rho=rho * (n_electrons / total), softening=softening)


def pairwise_table(system: GridSystem1D, gamma: float) -> np.ndarray:
    """Density-damped pair candidate as a feasible grid table.

    exp(-gamma rho(x) rho(x') w(x - x')) with the diagonal zeroed and
    each row rescaled to sum 1/h, mirroring how the continuum family is
    normalized rather than Euclidean-projected.
    """
    damp = (
        system.rho[:, None]
        * system.rho[None, :]
        * soft_kernel(system.x, system.softening)
    )
    table = np.exp(-gamma * damp)
    np.fill_diagonal(table, 0.0)
    return table / (table.sum(axis=1, keepdims=True) * system.h)


def discrete_gamma(system: GridSystem1D, f_table: np.ndarray, prefactor: str = "half") -> float:
    """Fisher + Coulomb of an f table on the grid (same conventions as
    the decomposition verifier, so values are directly comparable)."""
    fisher = grid_fisher(system.x, system.rho, f_table)
    expect = grid_coulomb_expectation(system.x, system.rho, f_table, system.softening)
    return fisher + prefactor_value(system.n_electrons, prefactor) * expect


def _project_rows(f_table: np.ndarray, h: float) -> np.ndarray:
    """Project each row onto {f >= 0, h * sum = 1, f[diagonal] = 0}."""
    m = f_table.shape[0]
    out = np.zeros_like(f_table)
    target = 1.0 / h
    for i in range(m):
        row = np.delete(f_table[i], i)
        out[i, np.arange(m) != i] = _project_simplex(row, target)
    return out


def _project_simplex(v: np.ndarray, s: float) -> np.ndarray:
    """Euclidean projection of v onto {w >= 0, sum w = s} (sort method)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - s
    k = np.arange(1, v.size + 1)
    cond = u - css / k > 0.0
    rho_idx = np.nonzero(cond)[0][-1]
    theta = css[rho_idx] / (rho_idx + 1.0)
    return np.maximum(v - theta, 0.0)


@dataclass
class BruteforceResult:
    value: float
    f_table: np.ndarray
    n_iter: int
    converged: bool
    restart_values: list[float]
    init_value: float | None = None

    @property
    def decrease_from_init(self) -> float | None:
        if self.init_value is None:
            return None
        return self.init_value - self.value


def _pgd(system, f0, prefactor, max_iter, tol):
    """Projected gradient descent with backtracking on the f table."""
    m = system.x.size
    h = system.h
    rho = system.rho
    a = fd_matrix(m, h)
    off = ~np.eye(m, dtype=bool)
    kernel = soft_kernel(system.x, system.softening)
    pref = prefactor_value(system.n_electrons, prefactor)
    grad_coulomb = pref * h * h * rho[:, None] * kernel

    def objective(f):
        return discrete_gamma(system, f, prefactor)

    def gradient(f):
        g = a @ f
        safe = np.maximum(f, _EPS_F)
        mask = off & (f > 0.0)
        ratio = np.where(mask, g / safe, 0.0)
        term1 = a.T @ (2.0 * rho[:, None] * ratio)
        term2 = -rho[:, None] * ratio * ratio * (f > _EPS_F)
        return (h * h / 8.0) * (term1 + term2) + grad_coulomb

    f = _project_rows(f0, h)
    val = objective(f)
    step = 0.1 * h
    stall = 0
    it = 0
    for it in range(1, max_iter + 1):
        grad = gradient(f)
        improved = False
        trial_step = step
        for _ in range(40):
            cand = _project_rows(f - trial_step * grad, h)
            cand_val = objective(cand)
            if cand_val < val:
                improved = True
                break
            trial_step *= 0.5
        if not improved:
            return f, val, it, True
        if val - cand_val < tol * max(1.0, abs(val)):
            stall += 1
        else:
            stall = 0
        f, val = cand, cand_val
        step = min(trial_step * 2.0, 10.0 * h)
        if stall >= 10:
            return f, val, it, True
    return f, val, it, False


def bruteforce_inner_min(
    system: GridSystem1D,
    f_init: np.ndarray | None = None,
    n_restarts: int = 4,
    max_iter: int = 3000,
    tol: float = 1e-9,
    seed: int = 0,
    prefactor: str = "half",
) -> BruteforceResult:
    """Minimize the discrete functional over admissible f tables.

    Starts from f_init (if given), a uniform off-diagonal table, and
    n_restarts random tables; returns the best optimum found.  The
    objective is convex (quadratic-over-linear Fisher plus linear
    Coulomb over linear constraints), so restarts mainly guard against
    slow corners rather than local minima.
    """
    m = system.x.size
    h = system.h
    inits: list[np.ndarray] = []
    init_value = None
    if f_init is not None:
        f0 = _project_rows(np.asarray(f_init, dtype=float), h)
        init_value = discrete_gamma(system, f0, prefactor)
        inits.append(f0)
    inits.append(np.ones((m, m)))
    for k in range(n_restarts):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(0xB7, k))
        )
        inits.append(rng.random((m, m)) + 1e-3)

    best = None
    values = []
    total_iter = 0
    all_converged = True
    for f0 in inits:
        f_star, val, iters, conv = _pgd(system, f0, prefactor, max_iter, tol)
        values.append(val)
        total_iter += iters
        all_converged = all_converged and conv
        if best is None or val < best[1]:
            best = (f_star, val)

    f_star, val = best
    # optimized tables keep an exactly zero diagonal by construction
    assert float(np.abs(np.diag(f_star)).max()) == 0.0
    return BruteforceResult(
        value=val,
        f_table=f_star,
        n_iter=total_iter,
        converged=all_converged,
        restart_values=values,
        init_value=init_value,
    )
