"""Magnitude-only observations of a constant-envelope tone in complex noise.

Under H1 each complex sample is ``A exp(j(omega k + theta)) + n(k)`` and under
H0 it is ``n(k)``, with the real and imaginary parts of ``n(k)`` independent
N(0, sigma2).  Only ``|r(k)|`` leaves the envelope detector, so the
generators return magnitudes.

Randomness always comes from a caller-supplied :class:`numpy.random.Generator`.
:func:`substream` derives those generators from a master seed plus an integer
key, so a block's draws depend on what it is, not on when or where it runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError

__all__ = [
    "SignalParams",
    "as_block",
    "generate_h0",
    "generate_h1",
    "draw_magnitudes",
    "snr_linear",
    "snr_db",
    "amplitude_for_snr_db",
    "substream",
]


@dataclass(frozen=True)
class SignalParams:
    """Parameters of one observation block.

    ``omega``/``theta`` left as ``None`` are drawn per block, ``theta`` from
    [0, 2pi) and ``omega`` from (0, pi).
    """

    amplitude: float
    noise_var: float
    block_len: int
    omega: Optional[float] = None
    theta: Optional[float] = None

    def __post_init__(self):
        if not (self.noise_var > 0 and math.isfinite(self.noise_var)):
            raise DomainError(f"noise_var must be positive, got {self.noise_var!r}")
        if not (self.amplitude >= 0 and math.isfinite(self.amplitude)):
            raise DomainError(f"amplitude must be >= 0, got {self.amplitude!r}")
        if int(self.block_len) != self.block_len or self.block_len < 1:
            raise DomainError(f"block_len must be a positive integer, got {self.block_len!r}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.noise_var)


def as_block(samples) -> np.ndarray:
    """Validate a magnitude block and return it as a 1-D float array."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError("a magnitude block must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError("magnitudes must be finite and non-negative")
    return arr


def draw_magnitudes(rng: np.random.Generator, amplitude: float, sigma: float, n: int, blocks: int,
                    omega: Optional[float] = None, theta: Optional[float] = None) -> np.ndarray:
    """Draw ``blocks`` independent magnitude blocks as a ``(blocks, n)`` array.

    Noise is drawn first as standard normals and scaled by ``sigma``, so the
    same generator state yields blocks that scale exactly with ``sigma`` when
    ``amplitude`` scales with it.
    """
    re = rng.standard_normal((blocks, n))
    im = rng.standard_normal((blocks, n))
    if amplitude > 0:
        w = rng.uniform(0.0, math.pi, size=(blocks, 1)) if omega is None else np.full((blocks, 1), omega)
        th = rng.uniform(0.0, 2 * math.pi, size=(blocks, 1)) if theta is None else np.full((blocks, 1), theta)
        phase = w * np.arange(n) + th
        re = sigma * re + amplitude * np.cos(phase)
        im = sigma * im + amplitude * np.sin(phase)
    else:
        re = sigma * re
        im = sigma * im
    return np.hypot(re, im)


def generate_h1(params: SignalParams, rng: np.random.Generator) -> np.ndarray:
    """One H1 block: magnitudes of tone plus noise, marginally Rician(A, sigma)."""
    return draw_magnitudes(rng, params.amplitude, params.sigma, params.block_len, 1,
                           params.omega, params.theta)[0]


def generate_h0(params: SignalParams, rng: np.random.Generator) -> np.ndarray:
    """One H0 block: noise magnitudes only, marginally Rayleigh(sigma)."""
    return draw_magnitudes(rng, 0.0, params.sigma, params.block_len, 1)[0]


def snr_linear(params: SignalParams) -> float:
    return params.amplitude ** 2 / (2.0 * params.noise_var)


def snr_db(params: SignalParams) -> float:
    rho = snr_linear(params)
    return 10.0 * math.log10(rho) if rho > 0 else -math.inf


def amplitude_for_snr_db(snr_db: float, noise_var: float = 1.0) -> float:
    """Amplitude A giving A^2 / (2 noise_var) = 10^(snr_db/10)."""
    return math.sqrt(2.0 * noise_var * 10.0 ** (snr_db / 10.0))


def _key_part(v: int) -> int:
    # SeedSequence spawn keys must be non-negative
    v = int(v)
    return v if v >= 0 else (1 << 64) + v


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Generator keyed by ``(master_seed, *key)``; identical keys give identical draws."""
    ss = np.random.SeedSequence(entropy=_key_part(master_seed), spawn_key=tuple(_key_part(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
