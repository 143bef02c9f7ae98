"""Counter-based deterministic random number generation.

Every variate is a pure function of (key, counter), so draws can be produced
in any order, in scalar or vectorized form, on any platform, and always come
out bit-identical.  This is what makes simulation reports reproducible
regardless of how trials are chunked or parallelized.

The construction:

  key      = low 64 bits of BLAKE2b(seed_bytes || label)
  state(c) = (key + c * 0x9E3779B97F4A7C15) mod 2^64
  word(c)  = splitmix64_finalizer(state(c))
  u(c)     = (word(c) >> 11) * 2^-53 + 2^-54        # uniform in (0, 1)
  z(c)     = sqrt(-2 ln u(2c)) * cos(2 pi u(2c+1))  # one normal per counter

The Box-Muller cosine branch is used alone so that normal draw ``c`` consumes
exactly the uniform counters ``2c`` and ``2c+1``; indexing stays trivial.
"""

from __future__ import annotations

import hashlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# Counter layout inside one trial's stream: slot = step-local index, below.
_TRIAL_STRIDE = 1 << 20
_OBS_REP_STRIDE = 1 << 12


def derive_key(seed: int, label: str) -> int:
    """Map a 64-bit seed and a stream label to an independent 64-bit key."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(seed).to_bytes(8, "little", signed=False))
    h.update(label.encode("utf-8"))
    return int.from_bytes(h.digest(), "little", signed=False)


def _mix(state: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arrays wrap modulo 2^64 silently
    z = state.copy()
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return z


def uniforms(key: int, counters: np.ndarray) -> np.ndarray:
    """Uniform variates in the open interval (0, 1), one per counter."""
    c = np.asarray(counters, dtype=np.uint64)
    state = np.uint64(key) + c * _GOLDEN
    word = _mix(state)
    return (word >> np.uint64(11)).astype(np.float64) * 2.0**-53 + 2.0**-54


def normals(key: int, counters: np.ndarray) -> np.ndarray:
    """Standard normal variates, one per counter (Box-Muller, cosine branch)."""
    c = np.asarray(counters, dtype=np.uint64)
    u1 = uniforms(key, c * np.uint64(2))
    u2 = uniforms(key, c * np.uint64(2) + np.uint64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def normal(key: int, counter: int) -> float:
    return float(normals(key, np.array([counter], dtype=np.uint64))[0])


class NoiseStreams:
    """Per-purpose noise streams for simulated print runs.

    Process noise and observation noise live on independent keys derived from
    (seed, label).  Draws are addressed by (trial, step[, repetition]), never
    by call order, so scalar and block access return the same values.

    Limits imposed by the counter layout: step * 2^12 + repetitions must stay
    below 2^20 per trial, i.e. leaf counts up to 255 with up to 4096 averaged
    repetitions, far beyond any realistic build plan.
    """

    def __init__(self, seed: int, label: str):
        self.seed = int(seed)
        self.label = label
        self._key_p = derive_key(seed, label + "/process")
        self._key_o = derive_key(seed, label + "/observation")

    def process_noise(self, trial: int, step: int, sigma_p: float) -> float:
        return float(self.process_noise_block(np.array([trial]), step, sigma_p)[0])

    def process_noise_block(
        self, trials: np.ndarray, step: int, sigma_p: float
    ) -> np.ndarray:
        counters = np.asarray(trials, dtype=np.uint64) * np.uint64(
            _TRIAL_STRIDE
        ) + np.uint64(step)
        return sigma_p * normals(self._key_p, counters)

    def observation_noise_mean(
        self, trial: int, step: int, repetitions: int, sigma_o: float
    ) -> float:
        return float(
            self.observation_noise_mean_block(
                np.array([trial]), step, repetitions, sigma_o
            )[0]
        )

    def observation_noise_mean_block(
        self, trials: np.ndarray, step: int, repetitions: int, sigma_o: float
    ) -> np.ndarray:
        """Mean of ``repetitions`` independent N(0, sigma_o) draws per trial."""
        if repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if step * _OBS_REP_STRIDE + repetitions >= _TRIAL_STRIDE:
            raise ValueError("step/repetitions exceed the counter layout")
        t = np.asarray(trials, dtype=np.uint64)
        base = t * np.uint64(_TRIAL_STRIDE) + np.uint64(step * _OBS_REP_STRIDE)
        reps = np.arange(repetitions, dtype=np.uint64)
        counters = base[:, None] + reps[None, :]
        draws = normals(self._key_o, counters.ravel()).reshape(len(t), repetitions)
        return sigma_o * draws.mean(axis=1)
