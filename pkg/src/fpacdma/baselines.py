"""Reference detectors: matched filter, decorrelator, MMSE, exhaustive ML and a standard GA."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConfigurationError, DetectorUnavailable
from .fpa import DetectionResult, FpaConfig, _fitness, search_bounds
from .objective import A_BOX

ML_MAX_USERS = 16
SINGULAR_EIG = 1e-9


class DetectorKind(enum.Enum):
    MatchedFilter = "mf"
    Decorrelator = "decorrelator"
    Mmse = "mmse"
    ExhaustiveMl = "ml"
    StandardGa = "ga"
    Fpa = "fpa"

    @classmethod
    def parse(cls, name: str) -> "DetectorKind":
        for kind in cls:
            if name.lower() in (kind.value, kind.name.lower()):
                return kind
        raise ConfigurationError(f"unknown detector {name!r}; choose from {[k.value for k in cls]}")


def _sign(x):
    return np.where(np.asarray(x) >= 0.0, 1.0, -1.0)


def matched_filter_detect(z) -> np.ndarray:
    """Componentwise sign of the matched-filter outputs (rows of a frame are handled too)."""
    return _sign(z)


def _check_invertible(M, what="correlation matrix"):
    M = np.asarray(M, dtype=float)
    eig = np.linalg.eigvalsh(0.5 * (M + M.T))[0]
    if not eig > SINGULAR_EIG:
        raise DetectorUnavailable(f"{what} is singular (smallest eigenvalue {eig:.3g})")
    return M


def decorrelator_detect(z, R) -> np.ndarray:
    """sign(R^-1 z).  ``z`` may be one observation or an F x U frame."""
    R = _check_invertible(R)
    z = np.asarray(z, dtype=float)
    return _sign(np.linalg.solve(R, z.T).T)


def mmse_detect(z, R, noise_var: float, E) -> np.ndarray:
    """sign((R + sigma^2 diag(1/E))^-1 z) with the true noise variance and energies."""
    E = np.asarray(E, dtype=float)
    M = np.asarray(R, dtype=float) + noise_var * np.diag(1.0 / E)
    M = _check_invertible(M, "MMSE filter matrix")
    z = np.asarray(z, dtype=float)
    return _sign(np.linalg.solve(M, z.T).T)


def _all_signs(u: int) -> np.ndarray:
    # lexicographic order over (-1, +1) per coordinate, first user most significant
    return np.array(list(itertools.product((-1.0, 1.0), repeat=u)))


def ml_exhaustive(z, R, E, a_true, return_fitness: bool = False):
    """Exhaustive maximization of the likelihood metric over all 2^U sign vectors for fixed fading.

    Ties go to the lexicographically first vector (with -1 < +1).  ``z`` may
    be one observation or an F x U frame; ``a_true`` must then be F x U too.
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z2 = np.atleast_2d(z)
    u = z2.shape[1]
    if u > ML_MAX_USERS:
        raise ConfigurationError(f"exhaustive ML refused for U={u} > {ML_MAX_USERS}")
    a2 = np.broadcast_to(np.asarray(a_true, dtype=float), z2.shape)
    R = np.asarray(R, dtype=float)
    sqrtE = np.sqrt(np.asarray(E, dtype=float))
    signs = _all_signs(u)
    out = np.empty_like(z2)
    best = np.empty(z2.shape[0])
    for n in range(z2.shape[0]):
        V = signs * (sqrtE * a2[n])
        L = 2.0 * V @ z2[n] - np.einsum("su,uv,sv->s", V, R, V)
        k = int(np.argmax(L))  # argmax returns the first maximizer
        out[n] = signs[k]
        best[n] = L[k]
    if single:
        out, best = out[0], best[0]
    return (out, best) if return_fitness else out


# ---------------------------------------------------------------------------
# Standard GA over the same [d | a] encoding


@dataclass(frozen=True)
class GaConfig:
    pop_size: int = 25
    generations: int | None = None  # derived from evaluation_budget when None
    evaluation_budget: int | None = None  # defaults to the FPA budget of FpaConfig()
    tournament: int = 2
    crossover_rate: float = 0.9
    mutation_std: float = 0.05
    mutation_rate: float | None = None  # 1/(2U) when None
    elitism: int = 1
    warm_jitter: float = 0.02
    init_fading_range: tuple[float, float] = (0.1, 1.2)
    hard_fitness: bool = True

    def __post_init__(self):
        if self.pop_size < 2:
            raise ConfigurationError("pop_size must be >= 2")
        if not 1 <= self.elitism < self.pop_size:
            raise ConfigurationError("elitism must lie in [1, pop_size)")
        if self.tournament < 1:
            raise ConfigurationError("tournament must be >= 1")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ConfigurationError("crossover_rate must lie in [0, 1]")
        if self.mutation_std < 0:
            raise ConfigurationError("mutation_std must be >= 0")
        if self.mutation_rate is not None and not 0.0 <= self.mutation_rate <= 1.0:
            raise ConfigurationError("mutation_rate must lie in [0, 1]")
        if self.generations is not None and self.generations < 0:
            raise ConfigurationError("generations must be >= 0")

    @classmethod
    def matched_to(cls, fpa_cfg: FpaConfig, **kw) -> "GaConfig":
        """GA spending the same number of fitness evaluations as ``fpa_cfg``."""
        return cls(evaluation_budget=fpa_cfg.evaluations, **kw)

    def num_generations(self) -> int:
        if self.generations is not None:
            return self.generations
        budget = self.evaluation_budget if self.evaluation_budget is not None else FpaConfig().evaluations
        per_gen = self.pop_size - self.elitism
        return max(0, (budget - self.pop_size) // per_gen)

    def evaluations(self) -> int:
        return self.pop_size + self.num_generations() * (self.pop_size - self.elitism)


@numba.njit(cache=True)
def _tournament(fit, size, rng):
    n = fit.shape[0]
    best = min(int(rng.random() * n), n - 1)
    for _ in range(size - 1):
        c = min(int(rng.random() * n), n - 1)
        if fit[c] > fit[best]:
            best = c
    return best


@numba.njit(cache=True)
def _ga_kernel(z, R, sqrtE, pop, lo, hi, generations, tsize, pcross, mstd, mrate, elitism,
               pin_fading, hard, rng, fit_trace):
    n, dim = pop.shape
    u = dim // 2
    v = np.empty(u)
    fit = np.empty(n)
    for i in range(n):
        fit[i] = _fitness(pop[i], z, R, sqrtE, hard, v)
    nxt = np.empty_like(pop)
    nfit = np.empty(n)
    genes = u if pin_fading else dim
    for g in range(generations):
        order = np.argsort(-fit)
        for e in range(elitism):
            nxt[e] = pop[order[e]]
            nfit[e] = fit[order[e]]
        for c in range(elitism, n):
            p1 = _tournament(fit, tsize, rng)
            p2 = _tournament(fit, tsize, rng)
            cross = rng.random() < pcross
            for k in range(dim):
                if cross and k < genes and rng.random() < 0.5:
                    nxt[c, k] = pop[p2, k]
                else:
                    nxt[c, k] = pop[p1, k]
            for k in range(genes):
                if rng.random() < mrate:
                    y = nxt[c, k] + mstd * rng.standard_normal()
                    nxt[c, k] = lo[k] if y < lo[k] else (hi[k] if y > hi[k] else y)
            nfit[c] = _fitness(nxt[c], z, R, sqrtE, hard, v)
        pop[:] = nxt
        fit[:] = nfit
        fit_trace[g] = fit.max()
    ib = np.argmax(fit)
    return pop[ib].copy(), fit[ib]


def ga_detect(
    z,
    R,
    E,
    ga_config: GaConfig | None = None,
    warm_fading=None,
    rng: np.random.Generator | None = None,
    known_fading=None,
) -> DetectionResult:
    """Generational GA with tournament selection, uniform crossover, Gaussian mutation and elitism.

    Initialization mirrors the FPA: symbols uniform in [-1, 1], fading either
    uniform, jittered around ``warm_fading``, or pinned to ``known_fading``.
    """
    cfg = ga_config or GaConfig()
    rng = rng if rng is not None else np.random.default_rng()
    z = np.ascontiguousarray(z, dtype=float)
    R = np.ascontiguousarray(R, dtype=float)
    sqrtE = np.sqrt(np.asarray(E, dtype=float))
    u = z.shape[0]
    if R.shape != (u, u) or sqrtE.shape != (u,):
        raise ConfigurationError(f"dimension mismatch: z{z.shape} R{R.shape} E{sqrtE.shape}")
    n = cfg.pop_size
    pop = np.empty((n, 2 * u))
    pop[:, :u] = rng.uniform(-1.0, 1.0, size=(n, u))
    if known_fading is not None:
        pop[:, u:] = np.asarray(known_fading, dtype=float)
    elif warm_fading is None:
        pop[:, u:] = rng.uniform(*cfg.init_fading_range, size=(n, u))
    else:
        pop[:, u:] = np.asarray(warm_fading, dtype=float) + cfg.warm_jitter * rng.standard_normal((n, u))
    if known_fading is None:
        pop[:, u:] = np.clip(pop[:, u:], *A_BOX)
    gens = cfg.num_generations()
    mrate = cfg.mutation_rate if cfg.mutation_rate is not None else 1.0 / (2 * u)
    trace = np.full(gens, np.nan)
    best, best_fit = _ga_kernel(
        z, R, sqrtE, pop, *search_bounds(u), gens, cfg.tournament, cfg.crossover_rate,
        cfg.mutation_std, mrate, cfg.elitism, known_fading is not None, cfg.hard_fitness, rng, trace,
    )
    d_star = best[:u]
    empty = np.empty(0)
    return DetectionResult(
        symbols=np.where(d_star >= 0.0, 1.0, -1.0),
        fading_estimates=best[u:].copy(),
        best_fitness=float(best_fit),
        soft_symbols=d_star.copy(),
        fitness_trace=trace,
        entropy_trace=empty,
        pc_trace=empty,
        gamma_a_trace=empty,
        evaluations=cfg.evaluations(),
    )


def ga_detect_frame(z_frame, R, E, ga_config: GaConfig | None = None, rng=None, known_fading=None):
    """Symbol-by-symbol GA detection over a frame, warm-starting the fading genes."""
    z_frame = np.atleast_2d(np.asarray(z_frame, dtype=float))
    F, u = z_frame.shape
    symbols = np.empty((F, u))
    fading = np.empty((F, u))
    warm = None
    for n in range(F):
        known = None if known_fading is None else known_fading[n]
        res = ga_detect(z_frame[n], R, E, ga_config, warm_fading=warm, rng=rng, known_fading=known)
        symbols[n] = res.symbols
        fading[n] = warm = res.fading_estimates
    return symbols, fading
