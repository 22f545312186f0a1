"""Synchronous flat-fading DS/CDMA uplink simulated at chip rate.

Each user's real fading coefficient follows a first-order autoregression

    a(n+1) = alpha * a(n) + nu,   alpha = exp(-2*pi*doppler_rate)

and the received chip vector for symbol n is ``S @ (sqrt(E) * a(n) * d(n)) + g(n)``
with white Gaussian chip noise of variance N0/2.  The matched-filter bank
projects each chip vector onto the signatures, ``z(n) = S.T @ r(n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigurationError
from .spreading import CodeBook, CorrelationMatrix, correlation_matrix

INITIAL_FADING_MEAN = 0.8
INITIAL_FADING_STD = 0.1
INITIAL_FADING_CLIP = (0.1, 1.5)


def fading_pole(doppler_rate: float) -> float:
    return math.exp(-2.0 * math.pi * doppler_rate)


def default_innovation_std(doppler_rate: float, stationary_std: float = 0.01) -> float:
    """Innovation std giving a stationary fading std of ``stationary_std``."""
    alpha = fading_pole(doppler_rate)
    return stationary_std * math.sqrt(max(1.0 - alpha * alpha, 0.0))


@dataclass(frozen=True)
class ChannelParams:
    num_users: int
    bit_energies: np.ndarray
    noise_psd: float
    frame_length: int = 100
    doppler_rate: float = 5e-4
    fading_innovation_std: float | None = None

    def __post_init__(self):
        E = np.asarray(self.bit_energies, dtype=float)
        object.__setattr__(self, "bit_energies", E)
        if E.shape != (self.num_users,):
            raise ConfigurationError(f"bit_energies must have length {self.num_users}, got shape {E.shape}")
        if np.any(E <= 0):
            raise ConfigurationError("bit energies must be positive")
        if self.doppler_rate < 0:
            raise ConfigurationError("doppler_rate must be >= 0")
        if self.noise_psd < 0:
            raise ConfigurationError("noise_psd must be >= 0")
        if self.frame_length < 1:
            raise ConfigurationError("frame_length must be >= 1")
        if self.fading_innovation_std is None:
            object.__setattr__(self, "fading_innovation_std", default_innovation_std(self.doppler_rate))
        elif self.fading_innovation_std < 0:
            raise ConfigurationError("fading_innovation_std must be >= 0")

    @property
    def alpha(self) -> float:
        return fading_pole(self.doppler_rate)

    @property
    def noise_var(self) -> float:
        """Per-chip (and per real dimension) noise variance sigma^2 = N0/2."""
        return self.noise_psd / 2.0

    @classmethod
    def from_snr(
        cls,
        num_users: int,
        snr_db: float,
        nearfar_db: float = 0.0,
        energy_uoi: float = 1.0,
        **kwargs,
    ) -> "ChannelParams":
        """User 1 gets ``energy_uoi`` at E_1/N0 = ``snr_db``; users 2..U are ``nearfar_db`` stronger."""
        E = np.full(num_users, energy_uoi * 10.0 ** (nearfar_db / 10.0))
        E[0] = energy_uoi
        noise_psd = energy_uoi / 10.0 ** (snr_db / 10.0)
        return cls(num_users=num_users, bit_energies=E, noise_psd=noise_psd, **kwargs)


@dataclass(frozen=True)
class ChannelState:
    fading: np.ndarray
    symbol_index: int = 0


@dataclass(frozen=True)
class FrameObservation:
    z: np.ndarray  # F x U
    true_symbols: np.ndarray  # F x U, +-1
    true_fading: np.ndarray  # F x U
    correlation: CorrelationMatrix
    bit_energies: np.ndarray

    @property
    def R(self) -> np.ndarray:
        return self.correlation.R

    @property
    def frame_length(self) -> int:
        return self.z.shape[0]


def initial_state(num_users: int, rng: np.random.Generator) -> ChannelState:
    a0 = rng.normal(INITIAL_FADING_MEAN, INITIAL_FADING_STD, size=num_users)
    return ChannelState(fading=np.clip(a0, *INITIAL_FADING_CLIP), symbol_index=0)


def advance_fading(state: ChannelState, params: ChannelParams, rng: np.random.Generator) -> ChannelState:
    fading = params.alpha * state.fading + rng.normal(0.0, params.fading_innovation_std, size=state.fading.shape)
    return ChannelState(fading=fading, symbol_index=state.symbol_index + 1)


def random_symbols(frame_length: int, num_users: int, rng: np.random.Generator) -> np.ndarray:
    return 2.0 * rng.integers(0, 2, size=(frame_length, num_users)) - 1.0


def transmit_frame(
    symbols: np.ndarray,
    codebook: CodeBook,
    params: ChannelParams,
    state: ChannelState,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Chip-rate received samples (F x N) and the fading trace (F x U) for one frame."""
    symbols = np.asarray(symbols, dtype=float)
    F, U = symbols.shape if symbols.ndim == 2 else (-1, -1)
    if U != params.num_users or state.fading.shape != (U,):
        raise ConfigurationError(
            f"symbols shape {symbols.shape} inconsistent with num_users={params.num_users}"
        )
    if not np.all(np.abs(symbols) == 1.0):
        raise ConfigurationError("symbols must be +-1")
    S = codebook.signature_matrix(U)
    # same recursion and draw order as repeated advance_fading calls, run as a linear filter
    drive = np.empty((F, U))
    drive[0] = state.fading
    drive[1:] = rng.normal(0.0, params.fading_innovation_std, size=(F - 1, U))
    fading = lfilter([1.0], [1.0, -params.alpha], drive, axis=0)
    amplitudes = np.sqrt(params.bit_energies) * fading * symbols
    chips = amplitudes @ S.T
    if params.noise_var > 0:
        chips += rng.normal(0.0, math.sqrt(params.noise_var), size=chips.shape)
    return chips, fading


def matched_filter_bank(chip_samples: np.ndarray, codebook: CodeBook, num_users: int) -> np.ndarray:
    S = codebook.signature_matrix(num_users)
    chip_samples = np.atleast_2d(chip_samples)
    if chip_samples.shape[1] != S.shape[0]:
        raise ConfigurationError(f"chip rows must have length {S.shape[0]}")
    return chip_samples @ S


def simulate_frame(
    codebook: CodeBook,
    params: ChannelParams,
    rng: np.random.Generator,
    state: ChannelState | None = None,
    symbols: np.ndarray | None = None,
) -> FrameObservation:
    """Draw symbols and an initial fading state if not given, transmit, and filter."""
    U = params.num_users
    if state is None:
        state = initial_state(U, rng)
    if symbols is None:
        symbols = random_symbols(params.frame_length, U, rng)
    chips, fading = transmit_frame(symbols, codebook, params, state, rng)
    z = matched_filter_bank(chips, codebook, U)
    return FrameObservation(
        z=z,
        true_symbols=np.asarray(symbols, dtype=float),
        true_fading=fading,
        correlation=correlation_matrix(codebook, U),
        bit_energies=params.bit_energies,
    )


def write_frame_csv(obs: FrameObservation, path) -> None:
    """Dump a frame as CSV rows ``n,user,true_symbol,true_fading,z`` (users numbered from 1)."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "user", "true_symbol", "true_fading", "z"])
        F, U = obs.z.shape
        for n in range(F):
            for i in range(U):
                writer.writerow(
                    [n, i + 1, int(obs.true_symbols[n, i]), repr(float(obs.true_fading[n, i])), repr(float(obs.z[n, i]))]
                )
