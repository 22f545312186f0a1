"""Flower pollination search for joint fading estimation and symbol detection.

A flower is the 2U vector ``[d | a]``: soft symbol estimates followed by
fading estimates.  Each iteration every flower is either pollinated globally
(a Levy flight toward the best flower, with separate scale factors for the
two halves) or locally (a uniform blend of the difference of two other
flowers).  New flowers replace old ones only when they improve the fitness.
The probability of global pollination is steered by the Shannon entropy of
the population fitness.

Across symbol periods the fading half of the population is warm-started
from the previous best estimate while the symbol half is redrawn.  After
the first ``fading_global_symbols`` periods the fading half only moves by
local pollination, scaled by ``gamma_a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigurationError, NonFiniteFitness
from .objective import A_BOX, D_BOX, NORMALIZE_EPS, Candidate

LEVY_LAMBDA_RANGE = (0.75, 1.95)
PC_LIMITS = (0.05, 0.95)


@dataclass(frozen=True)
class FpaConfig:
    num_flowers: int = 25
    max_iter: int = 2000
    p_change0: float = 0.35
    gamma_d0: float = 0.1
    gamma_a0: float = 0.05
    gamma_a_decay: float = 0.10
    levy_lambda: float = 1.0
    levy_beta: float = 1.5  # exponent of the large-step density; the sampler is governed by levy_lambda
    pc_step0: float = 0.05
    entropy_band: tuple[float, float] = (0.6, 0.9)
    warm_jitter: float = 0.02
    init_fading_range: tuple[float, float] = (0.1, 1.2)
    fading_global_symbols: int = 10
    local_fading_scaled: bool = True
    hard_fitness: bool = True

    def __post_init__(self):
        if self.num_flowers < 2:
            raise ConfigurationError("num_flowers must be >= 2")
        if self.max_iter < 0:
            raise ConfigurationError("max_iter must be >= 0")
        if not 0.0 <= self.p_change0 <= 1.0:
            raise ConfigurationError("p_change0 must lie in [0, 1]")
        if self.gamma_d0 <= 0 or self.gamma_a0 <= 0:
            raise ConfigurationError("gamma_d0 and gamma_a0 must be > 0")
        if not self.gamma_d0 > self.gamma_a0:
            raise ConfigurationError("gamma_d0 must exceed gamma_a0")
        if not 0.0 <= self.gamma_a_decay < 1.0:
            raise ConfigurationError("gamma_a_decay must lie in [0, 1)")
        lo, hi = LEVY_LAMBDA_RANGE
        if not lo <= self.levy_lambda <= hi:
            raise ConfigurationError(f"levy_lambda must lie in [{lo}, {hi}], got {self.levy_lambda}")
        b_lo, b_hi = self.entropy_band
        if not 0.0 <= b_lo <= b_hi <= 1.0:
            raise ConfigurationError("entropy_band must satisfy 0 <= low <= high <= 1")
        if self.pc_step0 < 0 or self.warm_jitter < 0 or self.fading_global_symbols < 0:
            raise ConfigurationError("pc_step0, warm_jitter and fading_global_symbols must be >= 0")
        f_lo, f_hi = self.init_fading_range
        if not A_BOX[0] <= f_lo <= f_hi <= A_BOX[1]:
            raise ConfigurationError(f"init_fading_range must lie inside {A_BOX}")

    @property
    def evaluations(self) -> int:
        """Fitness evaluations spent by one detection call."""
        return self.num_flowers * (self.max_iter + 1)

    @property
    def pc_interval(self) -> int:
        return max(1, self.max_iter // 10)

    def gamma_a(self, t: int) -> float:
        """Fading-part scale factor at (zero-based) iteration ``t``."""
        if self.max_iter == 0:
            return self.gamma_a0
        return self.gamma_a0 * (1.0 - self.gamma_a_decay) ** ((4 * t) // self.max_iter)


@dataclass
class DetectionResult:
    symbols: np.ndarray
    fading_estimates: np.ndarray
    best_fitness: float
    soft_symbols: np.ndarray
    fitness_trace: np.ndarray = field(repr=False)
    entropy_trace: np.ndarray = field(repr=False)
    pc_trace: np.ndarray = field(repr=False)
    gamma_a_trace: np.ndarray = field(repr=False)
    evaluations: int = 0

    def write_trace_csv(self, path) -> None:
        """Per-iteration trace as CSV columns ``t,best_fitness,entropy,p_change,gamma_a``."""
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "best_fitness", "entropy", "p_change", "gamma_a"])
            for t in range(len(self.fitness_trace)):
                writer.writerow(
                    [t, repr(float(self.fitness_trace[t])), repr(float(self.entropy_trace[t])),
                     repr(float(self.pc_trace[t])), repr(float(self.gamma_a_trace[t]))]
                )


def mantegna_sigma(lam: float) -> float:
    """Scale of the numerator Gaussian in Mantegna's Levy-stable step generator."""
    num = math.gamma(1.0 + lam) * math.sin(math.pi * lam / 2.0)
    den = lam * math.gamma((1.0 + lam) / 2.0) * 2.0 ** ((lam - 1.0) / 2.0)
    return (num / den) ** (1.0 / lam)


def levy_density(s, beta: float = 1.5):
    """Large-step asymptotic Levy density beta*Gamma(beta)*sin(pi*beta/2)/pi * s^-(1+beta)."""
    s = np.asarray(s, dtype=float)
    return beta * math.gamma(beta) * math.sin(math.pi * beta / 2.0) / math.pi / s ** (1.0 + beta)


@numba.njit(cache=True)
def _levy_draw(sigma, inv_lam, rng):
    num = sigma * rng.standard_normal()
    den = abs(rng.standard_normal())
    if inv_lam == 1.0:
        return num / den
    return num / den**inv_lam


@numba.njit(cache=True)
def _levy_fill(out, start, stop, sigma, inv_lam, rng):
    for k in range(start, stop):
        out[k] = _levy_draw(sigma, inv_lam, rng)


def levy_step(dim: int, lam: float, rng: np.random.Generator) -> np.ndarray:
    """``dim`` independent Mantegna steps u / |v|^(1/lam), u ~ N(0, sigma^2), v ~ N(0, 1)."""
    lo, hi = LEVY_LAMBDA_RANGE
    if not lo <= lam <= hi:
        raise ConfigurationError(f"levy_lambda must lie in [{lo}, {hi}], got {lam}")
    out = np.empty(dim)
    _levy_fill(out, 0, dim, mantegna_sigma(lam), 1.0 / lam, rng)
    return out


def search_bounds(u: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate lower and upper clipping bounds for a 2U flower.

    The compiled moves read one bound pair per half (indices 0 and U).
    """
    lo = np.concatenate([np.full(u, D_BOX[0]), np.full(u, A_BOX[0])])
    hi = np.concatenate([np.full(u, D_BOX[1]), np.full(u, A_BOX[1])])
    return lo, hi


@numba.njit(cache=True)
def _box(y, lo, hi):
    return lo if y < lo else (hi if y > hi else y)


@numba.njit(cache=True)
def _global_move(x, best, out, gamma_d, gamma_a, levy, lo, hi):
    # levy holds 2u draws: first u for the symbol half, last u for the fading half
    u = x.shape[0] // 2
    dlo, dhi, alo, ahi = lo[0], hi[0], lo[u], hi[u]
    for k in range(u):
        out[k] = _box(x[k] + gamma_d * levy[k] * (best[k] - x[k]), dlo, dhi)
        m = u + k
        out[m] = _box(x[m] + gamma_a * levy[m] * (best[m] - x[m]), alo, ahi)


@numba.njit(cache=True)
def _local_move(x, xj, xk, out, eps, scale_a, lo, hi):
    u = x.shape[0] // 2
    dlo, dhi, alo, ahi = lo[0], hi[0], lo[u], hi[u]
    eps_a = scale_a * eps
    for k in range(u):
        out[k] = _box(x[k] + eps * (xj[k] - xk[k]), dlo, dhi)
        m = u + k
        out[m] = _box(x[m] + eps_a * (xj[m] - xk[m]), alo, ahi)


def _as_vector(x):
    return x.to_vector() if isinstance(x, Candidate) else np.asarray(x, dtype=float)


def _like(template, vec):
    return Candidate.from_vector(vec) if isinstance(template, Candidate) else vec


def global_pollinate(flower, best, gamma_d: float, gamma_a: float, rng=None, levy=None, lam: float = 1.0):
    """Levy flight of the symbol and fading halves toward ``best`` with scales gamma_d, gamma_a.

    ``levy`` may be given (length 2U) to fix the step; otherwise independent
    draws are taken for every coordinate.  Accepts and returns either flat
    vectors or :class:`Candidate` objects.
    """
    x, b = _as_vector(flower), _as_vector(best)
    u = x.shape[0] // 2
    if levy is None:
        levy = levy_step(2 * u, lam, rng)
    out = np.empty_like(x)
    _global_move(x, b, out, gamma_d, gamma_a, np.asarray(levy, dtype=float), *search_bounds(u))
    return _like(flower, out)


def local_pollinate(flower, xj, xk, rng=None, eps: float | None = None, scale_a: float = 1.0):
    """x + eps * (xj - xk) with one eps ~ U[0, 1] shared by all coordinates.

    The fading half of the difference is additionally multiplied by ``scale_a``.
    """
    x = _as_vector(flower)
    if eps is None:
        eps = rng.random()
    out = np.empty_like(x)
    _local_move(x, _as_vector(xj), _as_vector(xk), out, eps, scale_a, *search_bounds(x.shape[0] // 2))
    return _like(flower, out)


@numba.njit(cache=True)
def _update_pc(p_change, entropy, t, max_iter, num_flowers, pc_step0, band_lo, band_hi):
    h = entropy / np.log(num_flowers)
    step = pc_step0 * (1.0 - t / max_iter)
    if h > band_hi:
        p_change += step
    elif h < band_lo:
        p_change -= step
    return min(max(p_change, PC_LIMITS[0]), PC_LIMITS[1])


def pc_update_due(t: int, max_iter: int) -> bool:
    """Whether the change probability is adapted after ``t`` completed iterations.

    Adaptation happens every max_iter/10 iterations, skipping the first and
    last tenth of the run where high entropy is expected anyway.
    """
    interval = max(1, max_iter // 10)
    return t % interval == 0 and interval < t <= max_iter - interval


def update_change_probability(p_change: float, entropy: float, t: int, cfg: FpaConfig) -> float:
    """Raise P_c when population fitness is uniform (high entropy), lower it when dispersed."""
    return float(
        _update_pc(p_change, entropy, t, cfg.max_iter, cfg.num_flowers, cfg.pc_step0, *cfg.entropy_band)
    )


@numba.njit(cache=True)
def _fitness(x, z, R, sqrtE, hard, v):
    u = z.shape[0]
    lin = 0.0
    for i in range(u):
        d = x[i]
        if hard:
            d = 1.0 if d >= 0.0 else -1.0
        v[i] = sqrtE[i] * x[u + i] * d
        lin += v[i] * z[i]
    quad = 0.0
    for i in range(u):
        acc = 0.5 * R[i, i] * v[i]
        for j in range(i + 1, u):
            acc += R[i, j] * v[j]
        quad += v[i] * acc
    return 2.0 * lin - 2.0 * quad


@numba.njit(cache=True)
def _entropy_of(fit):
    n = fit.shape[0]
    lo = fit.min()
    total = 0.0
    for i in range(n):
        total += fit[i] - lo + NORMALIZE_EPS
    h = 0.0
    for i in range(n):
        p = (fit[i] - lo + NORMALIZE_EPS) / total
        if p > 0.0:
            h -= p * np.log(p)
    return h


@numba.njit(cache=True)
def _fpa_kernel(
    z, R, sqrtE, pop, lo, hi, num_iter, p_change, gamma_d, gamma_a0, decay, sigma, inv_lam,
    pc_step0, band_lo, band_hi, pin_fading, hard, local_scaled, fading_global, rng,
    fit_trace, ent_trace, pc_trace, ga_trace,
):
    n, dim = pop.shape
    u = dim // 2
    v = np.empty(u)
    levy = np.zeros(dim)
    fit = np.empty(n)
    cand = np.empty((n, dim))
    cand_fit = np.empty(n)
    finite = True

    for i in range(n):
        fit[i] = _fitness(pop[i], z, R, sqrtE, hard, v)
        finite = finite and np.isfinite(fit[i])
    ib = np.argmax(fit)
    best = pop[ib].copy()
    best_fit = fit[ib]

    # fading half is frozen when pinned; otherwise global moves touch it only if enabled
    move_a = not pin_fading
    global_a = fading_global and move_a
    interval = max(1, num_iter // 10)
    for t in range(num_iter):
        gamma_a = gamma_a0 * (1.0 - decay) ** ((4 * t) // num_iter)
        scale_a = (gamma_a if local_scaled else 1.0) if move_a else 0.0
        for i in range(n):
            if rng.random() < p_change:
                _levy_fill(levy, 0, dim if global_a else u, sigma, inv_lam, rng)
                _global_move(pop[i], best, cand[i], gamma_d, gamma_a if global_a else 0.0, levy, lo, hi)
            else:
                # float-scaled indices; much cheaper than Generator.integers under numba
                j = min(int(rng.random() * n), n - 1)
                k = min(int(rng.random() * (n - 1)), n - 2)
                if k >= j:
                    k += 1
                _local_move(pop[i], pop[j], pop[k], cand[i], rng.random(), scale_a, lo, hi)
            cand_fit[i] = _fitness(cand[i], z, R, sqrtE, hard, v)
            finite = finite and np.isfinite(cand_fit[i])
        for i in range(n):
            if cand_fit[i] > fit[i]:
                pop[i] = cand[i]
                fit[i] = cand_fit[i]
        ib = np.argmax(fit)
        if fit[ib] > best_fit:
            best_fit = fit[ib]
            best[:] = pop[ib]

        h = _entropy_of(fit)
        done = t + 1
        if done % interval == 0 and interval < done <= num_iter - interval:
            p_change = _update_pc(p_change, h, done, num_iter, n, pc_step0, band_lo, band_hi)
        fit_trace[t] = best_fit
        ent_trace[t] = h
        pc_trace[t] = p_change
        ga_trace[t] = gamma_a
        if not finite:
            break
    return best, best_fit, finite


def initial_population(u: int, cfg: FpaConfig, rng: np.random.Generator, warm_fading=None, known_fading=None):
    """Symbol halves uniform in [-1, 1]; fading halves uniform, jittered around ``warm_fading``,
    or pinned to ``known_fading``."""
    n = cfg.num_flowers
    pop = np.empty((n, 2 * u))
    pop[:, :u] = rng.uniform(-1.0, 1.0, size=(n, u))
    if known_fading is not None:
        pop[:, u:] = np.asarray(known_fading, dtype=float)
        return pop
    if warm_fading is None:
        pop[:, u:] = rng.uniform(*cfg.init_fading_range, size=(n, u))
    else:
        pop[:, u:] = np.asarray(warm_fading, dtype=float) + cfg.warm_jitter * rng.standard_normal((n, u))
    pop[:, u:] = np.clip(pop[:, u:], *A_BOX)
    return pop


def fpa_detect(
    z,
    R,
    E,
    cfg: FpaConfig | None = None,
    warm_fading=None,
    rng: np.random.Generator | None = None,
    known_fading=None,
    fading_global: bool = True,
) -> tuple[DetectionResult, np.ndarray]:
    """Run the search for one symbol period.

    Returns the detection result and the fading estimate to warm-start the
    next symbol period.  With ``known_fading`` the fading half is pinned to
    the given values and only the symbols are searched.  ``fading_global``
    controls whether global pollination moves the fading half.
    """
    cfg = cfg or FpaConfig()
    rng = rng if rng is not None else np.random.default_rng()
    z = np.ascontiguousarray(z, dtype=float)
    R = np.ascontiguousarray(R, dtype=float)
    sqrtE = np.sqrt(np.asarray(E, dtype=float))
    u = z.shape[0]
    if R.shape != (u, u) or sqrtE.shape != (u,):
        raise ConfigurationError(f"dimension mismatch: z{z.shape} R{R.shape} E{sqrtE.shape}")
    pin = known_fading is not None
    pop = initial_population(u, cfg, rng, warm_fading, known_fading)
    m = cfg.max_iter
    traces = [np.full(m, np.nan) for _ in range(4)]
    best, best_fit, finite = _fpa_kernel(
        z, R, sqrtE, pop, *search_bounds(u), m, cfg.p_change0, cfg.gamma_d0, cfg.gamma_a0,
        cfg.gamma_a_decay, mantegna_sigma(cfg.levy_lambda), 1.0 / cfg.levy_lambda, cfg.pc_step0,
        cfg.entropy_band[0], cfg.entropy_band[1], pin, cfg.hard_fitness, cfg.local_fading_scaled,
        fading_global, rng, *traces,
    )
    if not finite:
        raise NonFiniteFitness(f"non-finite fitness encountered (z={z}, E={np.square(sqrtE)})")
    d_star, a_star = best[:u].copy(), best[u:].copy()
    result = DetectionResult(
        symbols=np.where(d_star >= 0.0, 1.0, -1.0),
        fading_estimates=a_star,
        best_fitness=float(best_fit),
        soft_symbols=d_star,
        fitness_trace=traces[0],
        entropy_trace=traces[1],
        pc_trace=traces[2],
        gamma_a_trace=traces[3],
        evaluations=cfg.evaluations,
    )
    return result, a_star


def fpa_detect_frame(z_frame, R, E, cfg: FpaConfig | None = None, rng=None, known_fading=None):
    """Symbol-by-symbol detection over a frame with warm-started fading estimates.

    ``known_fading`` (F x U), when given, pins the fading half per symbol.
    Returns (symbols F x U, fading estimates F x U).
    """
    cfg = cfg or FpaConfig()
    z_frame = np.atleast_2d(np.asarray(z_frame, dtype=float))
    F, u = z_frame.shape
    symbols = np.empty((F, u))
    fading = np.empty((F, u))
    warm = None
    for n in range(F):
        known = None if known_fading is None else known_fading[n]
        res, warm = fpa_detect(
            z_frame[n], R, E, cfg, warm_fading=warm, rng=rng, known_fading=known,
            fading_global=n < cfg.fading_global_symbols,
        )
        symbols[n] = res.symbols
        fading[n] = res.fading_estimates
    return symbols, fading
