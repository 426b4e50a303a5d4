"""Quantum-jump unravelling of the pulsed two-level master equation.

Between jumps a trajectory evolves deterministically under
H_eff = Delta |e><e| + (Omega/2) sigma_x - (i/2)(gamma + 2 gamma_d) |e><e|,
so the no-jump norm decay only depends on the (state, start time) after the
last jump. The engine tabulates these decays once on a fixed grid spanning
the pulse; sampling a trajectory is then a sequence of table look-ups. After
the pulse the drive is off, and a trajectory left in a superposition emits
exactly once more with probability |c_e|^2 after an exponential delay.

Jump operators: sqrt(gamma) sigma_- (photon emission) and
sqrt(2 gamma_d) |e><e| (pure dephasing, no photon).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

from ..bloch import rabi_frequency

__all__ = ["JumpEngine", "JumpBatch", "get_engine", "quantum_jump_pulse", "quantum_jump_batch",
           "p2_probability", "P2Estimate", "P2_REFERENCE"]

# Two-or-more emission probability for a 26 ps (intensity FWHM) pi pulse,
# gamma = 1/0.64 ns^-1, gamma_d = 0.2 ns^-1: p2_probability with 10^6
# trajectories and np.random.default_rng(20171001). Frozen as a regression value.
P2_REFERENCE = {"P2": 0.008746, "se_P2": 9.311e-05, "P1": 0.988943, "mean": 1.006444,
                "n_traj": 1_000_000, "seed": 20171001}


class JumpBatch(NamedTuple):
    """Emission record of ``n`` pulses.

    ``counts[i]`` photons were emitted in pulse ``i``; ``owner``/``times`` list
    every emission (ns, relative to the pulse centre), sorted by owner then time.
    """

    counts: np.ndarray
    owner: np.ndarray
    times: np.ndarray


class P2Estimate(NamedTuple):
    P1: float
    P2: float
    se_P1: float
    se_P2: float
    mean: float
    se_mean: float
    n_traj: int


class JumpEngine:
    def __init__(self, emitter, pulse, n_steps=720):
        self.emitter = emitter
        self.pulse = pulse
        lo, hi = pulse.support
        self.t_grid = np.linspace(lo, hi, n_steps + 1)
        self.dt = self.t_grid[1] - self.t_grid[0]
        self.K = n_steps
        g, gd, delta = emitter.gamma, emitter.gamma_d, pulse.delta
        self.p_emit = g / (g + 2.0 * gd)

        t_mid = self.t_grid[:-1] + self.dt / 2
        om = rabi_frequency(pulse, t_mid)
        h = np.zeros((n_steps, 2, 2), dtype=complex)
        h[:, 1, 1] = delta - 0.5j * (g + 2.0 * gd)
        h[:, 0, 1] = h[:, 1, 0] = om / 2.0
        props = expm(-1j * self.dt * h)

        K = n_steps
        n_rows = 2 * (K + 1)
        norm2 = np.ones((n_rows, K + 1))
        psi = np.zeros((n_rows, 2), dtype=complex)
        start = np.concatenate([np.arange(K + 1), np.arange(K + 1)])
        psi[: K + 1, 0] = 1.0  # rows 0..K: restart in |g> at grid index k
        psi[K + 1:, 1] = 1.0   # rows K+1..2K+1: restart in |e>
        for j in range(K):
            live = start <= j
            psi[live] = psi[live] @ props[j].T
            norm2[live, j + 1] = np.einsum("ij,ij->i", psi[live], psi[live].conj()).real
        n_end = norm2[:, K]
        with np.errstate(invalid="ignore", divide="ignore"):
            self.pe_end = np.where(n_end > 0, np.abs(psi[:, 1]) ** 2 / n_end, 0.0)
        # rows are monotone in (1 - norm2); offset by 2 * row so the flat array is sorted
        np.clip(norm2, 0.0, 1.0, out=norm2)
        norm2 = np.minimum.accumulate(norm2, axis=1)
        self.norm2 = norm2
        self._flat = (2.0 * np.arange(n_rows)[:, None] + (1.0 - norm2)).ravel()
        self.n_rows = n_rows

    def _row(self, state_e, k):
        return state_e * (self.K + 1) + k

    def sample(self, n, rng):
        """Sample ``n`` independent pulses, each starting in the ground state."""
        K = self.K
        t0 = self.pulse.t0
        gamma = self.emitter.gamma
        idx_all = np.arange(n)
        row = np.zeros(n, dtype=np.int64)
        active = idx_all
        owners, times = [], []
        while active.size:
            u = rng.random(active.size)
            target = 2.0 * row + 1.0 - u
            pos = np.searchsorted(self._flat, target, side="right")
            j = pos - row * (K + 1)
            jumped = j <= K

            # no further jump inside the window: possibly one delayed emission
            done = ~jumped
            if np.any(done):
                r_done = row[done]
                emit = rng.random(r_done.size) < self.pe_end[r_done]
                delay = rng.exponential(1.0 / gamma, size=r_done.size)
                owners.append(active[done][emit])
                times.append(self.t_grid[K] + delay[emit] - t0)

            if not np.any(jumped):
                break
            a = active[jumped]
            r = row[jumped]
            jj = j[jumped]
            uu = u[jumped]
            n_prev = self.norm2[r, jj - 1]
            n_here = self.norm2[r, jj]
            frac = np.where(n_prev > n_here, (n_prev - uu) / np.maximum(n_prev - n_here, 1e-300), 1.0)
            frac = np.clip(frac, 0.0, 1.0)
            t_jump = self.t_grid[jj - 1] + frac * self.dt
            is_emit = rng.random(a.size) < self.p_emit
            owners.append(a[is_emit])
            times.append(t_jump[is_emit] - t0)
            k_restart = np.where(frac < 0.5, jj - 1, jj)
            row = np.where(is_emit, self._row(0, k_restart), self._row(1, k_restart))
            active = a

        owner = np.concatenate(owners) if owners else np.zeros(0, dtype=np.int64)
        t = np.concatenate(times) if times else np.zeros(0)
        order = np.lexsort((t, owner))
        owner, t = owner[order].astype(np.int64), t[order]
        counts = np.bincount(owner, minlength=n)
        return JumpBatch(counts, owner, t)


@lru_cache(maxsize=16)
def get_engine(emitter, pulse, n_steps=720):
    return JumpEngine(emitter, pulse, n_steps)


def quantum_jump_batch(emitter, pulse, n, rng, n_steps=720):
    if pulse.theta == 0:
        z = np.zeros(0, dtype=np.int64)
        return JumpBatch(np.zeros(n, dtype=np.int64), z, np.zeros(0))
    return get_engine(emitter, pulse, n_steps).sample(n, rng)


def quantum_jump_pulse(emitter, pulse, rng, n_steps=720):
    """Emission times (ns, relative to the pulse centre) of one trajectory."""
    return list(quantum_jump_batch(emitter, pulse, 1, rng, n_steps).times)


def p2_probability(emitter, pulse, n_traj, rng, n_steps=720):
    """Monte Carlo probabilities of exactly one and of two-or-more emissions."""
    if n_traj < 10_000:
        raise ValueError("n_traj must be >= 1e4")
    counts = quantum_jump_batch(emitter, pulse, n_traj, rng, n_steps).counts
    p1 = float(np.mean(counts == 1))
    p2 = float(np.mean(counts >= 2))
    se = lambda p: math.sqrt(p * (1 - p) / n_traj)
    return P2Estimate(p1, p2, se(p1), se(p2), float(counts.mean()),
                      float(counts.std(ddof=1) / math.sqrt(n_traj)), n_traj)
