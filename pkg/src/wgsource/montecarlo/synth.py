"""Monte Carlo synthesis of detector click streams for HBT and HOM experiments.

Pulses are processed in fixed-size blocks; every block draws from its own
``SeedSequence`` child keyed by (experiment, block index), so the output does
not depend on how many workers process the blocks. The blinking telegraph
is a single continuous Markov process drawn from its own substream.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..bloch import EmitterParams, PulseParams
from ..photonstats import HomSetup
from .jumps import quantum_jump_batch
from .streams import ClickStream, apply_deadtime

__all__ = ["SourceModel", "synth_hbt", "synth_hom", "blink_states", "substream", "REFERENCE_REP_PERIOD_NS"]

REFERENCE_REP_PERIOD_NS = 1e3 / 72.5  # 72.5 MHz laser
_BLOCK = 1 << 18
_STREAM_BLINK, _STREAM_HBT, _STREAM_HOM = 0, 1, 2
# pulse 0 is centred here so emissions during the pulse rise keep t >= 0
_T_OFFSET_PS = 10_000


@dataclass(frozen=True)
class SourceModel:
    """Parameters of the synthetic source and detectors.

    ``p_click`` is the probability that an emitted photon is detected (all
    collection and detection losses). With ``pulse`` set, emission per pulse
    comes from the quantum-jump engine (re-excitation included); otherwise one
    photon per bright pulse is emitted with an exponential delay of ``lifetime``.
    """

    p_click: float
    xi: float = 0.0
    blink_rate: float = 0.25        # us^-1, telegraph relaxation rate
    blink_fraction: float = 0.0     # stationary dark-state fraction
    rep_period: float = REFERENCE_REP_PERIOD_NS  # ns
    V: float = 1.0
    deadtime: float = 100.0         # ns
    lifetime: float = 0.64          # ns
    gamma_d: float = 0.0            # ns^-1, used only with ``pulse``
    pulse: PulseParams | None = None

    def __post_init__(self):
        for name in ("p_click", "xi", "blink_fraction", "V"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.blink_fraction >= 1.0:
            raise ValueError("blink_fraction must be < 1")
        if not self.rep_period > 0:
            raise ValueError("rep_period must be > 0")
        if self.deadtime < 0 or self.lifetime <= 0 or self.blink_rate <= 0:
            raise ValueError("deadtime >= 0, lifetime > 0 and blink_rate > 0 required")
        if self.xi * self.p_click > 1:
            raise ValueError("xi * p_click must not exceed 1")

    @property
    def emitter(self):
        return EmitterParams(1.0 / self.lifetime, self.gamma_d)

    @property
    def rep_period_ps(self):
        return self.rep_period * 1e3


def substream(seed, *key):
    """Independent generator for a (stream, block, ...) key under one seed."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))


def _seed_of(rng):
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2 ** 63))
    if rng is None:
        raise ValueError("a seed is required; refusing to run nondeterministically")
    return int(rng)


def blink_states(model, n_pulses, seed):
    """Boolean 'bright' flag per pulse from a two-state telegraph process.

    Bright -> dark at rate lambda f, dark -> bright at rate lambda (1 - f), so
    the dark fraction is f and the intensity correlation relaxes at lambda.
    """
    f = model.blink_fraction
    if f == 0:
        return np.ones(n_pulses, dtype=bool)
    rng = substream(seed, _STREAM_BLINK)
    lam = model.blink_rate * 1e-3  # ns^-1
    k_off, k_on = lam * f, lam * (1.0 - f)
    total = n_pulses * model.rep_period
    dark = rng.random() < f
    t = 0.0
    switches = []
    states = []
    chunk = max(64, int(2 * total * k_off) + 64)
    while t < total:
        # alternate dwell times starting from the current state
        first_rate = k_on if dark else k_off
        second_rate = k_off if dark else k_on
        a = rng.exponential(1.0 / first_rate, size=chunk)
        b = rng.exponential(1.0 / second_rate, size=chunk)
        dwell = np.empty(2 * chunk)
        dwell[0::2], dwell[1::2] = a, b
        ends = t + np.cumsum(dwell)
        st = np.empty(2 * chunk, dtype=bool)
        st[0::2], st[1::2] = dark, not dark
        switches.append(ends)
        states.append(st)
        t = ends[-1]
    ends = np.concatenate(switches)
    st = np.concatenate(states)
    pulse_t = np.arange(n_pulses) * model.rep_period
    seg = np.searchsorted(ends, pulse_t, side="right")
    return ~st[seg]


def _emissions(model, bright_idx, rng):
    """Detected QD photons as (pulse index, delay in ns)."""
    if model.pulse is None:
        hit = rng.random(bright_idx.size) < model.p_click
        idx = bright_idx[hit]
        delay = rng.exponential(model.lifetime, size=idx.size)
        return idx, delay
    batch = quantum_jump_batch(model.emitter, model.pulse, bright_idx.size, rng)
    keep = rng.random(batch.owner.size) < model.p_click
    return bright_idx[batch.owner[keep]], batch.times[keep]


def _photons(model, start, stop, bright, rng):
    """All detected photons of pulses [start, stop): pulse index, delay, is_qd."""
    n = stop - start
    local_bright = np.nonzero(bright[start:stop])[0]
    qd_idx, qd_delay = _emissions(model, local_bright, rng)
    leak = np.nonzero(rng.random(n) < model.xi * model.p_click)[0]
    idx = np.concatenate([qd_idx, leak]) + start
    delay = np.concatenate([qd_delay, np.zeros(leak.size)])
    is_qd = np.concatenate([np.ones(qd_idx.size, bool), np.zeros(leak.size, bool)])
    return idx, delay, is_qd


def _run_blocks(fn, n_pulses, workers):
    blocks = [(b, b * _BLOCK, min((b + 1) * _BLOCK, n_pulses))
              for b in range(math.ceil(n_pulses / _BLOCK))]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(lambda a: fn(*a), blocks))
    return [fn(*a) for a in blocks]


def _finish(model, n_pulses, t_ps, ch):
    """Sort, apply per-channel deadtime and split into one stream per channel."""
    order = np.lexsort((ch, t_ps))
    t_ps, ch = t_ps[order], ch[order]
    keep = apply_deadtime(t_ps, ch, round(model.deadtime * 1e3))
    t_ps, ch = t_ps[keep], ch[keep]
    duration = int(round(n_pulses * model.rep_period_ps)) + 1_000_000
    inside = t_ps < duration
    t_ps, ch = t_ps[inside], ch[inside]
    return tuple(ClickStream(t_ps[ch == c], ch[ch == c], duration, model.rep_period_ps)
                 for c in (0, 1))


def synth_hbt(model, n_pulses, rng, workers=1):
    """Two detector streams behind a 50:50 splitter (Hanbury Brown-Twiss)."""
    if n_pulses < 1:
        raise ValueError("n_pulses must be >= 1")
    seed = _seed_of(rng)
    bright = blink_states(model, n_pulses, seed)
    T = model.rep_period_ps

    def block(b, start, stop):
        g = substream(seed, _STREAM_HBT, b)
        idx, delay, _ = _photons(model, start, stop, bright, g)
        ch = (g.random(idx.size) < 0.5).astype(np.uint16)
        t = np.rint(_T_OFFSET_PS + idx * T + delay * 1e3).astype(np.int64)
        return t, ch

    parts = _run_blocks(block, n_pulses, workers)
    t = np.concatenate([p[0] for p in parts])
    ch = np.concatenate([p[1] for p in parts])
    return _finish(model, n_pulses, t, ch)


def synth_hom(model, setup, polarization, n_pulses, rng, workers=1):
    """Detector streams behind an unbalanced Mach-Zehnder with a one-period delay.

    Each photon takes the long arm with probability R. Photons meeting at the
    second beamsplitter from opposite arms in an otherwise empty time slot
    interfere when both come from the emitter: they end on different detectors
    with probability R^2 + T^2 - 2RT M, where M = (1 - epsilon)^2 V for
    co-polarised and 0 for cross-polarised input. All other photons are routed
    independently (long arm -> detector 0 with probability T, short arm ->
    detector 1 with probability T).
    """
    if polarization not in ("co", "cross"):
        raise ValueError("polarization must be 'co' or 'cross'")
    if n_pulses < 1:
        raise ValueError("n_pulses must be >= 1")
    seed = _seed_of(rng)
    bright = blink_states(model, n_pulses, seed)
    T_ps = model.rep_period_ps
    R, T = setup.R, setup.T
    M = (1.0 - setup.epsilon) ** 2 * model.V if polarization == "co" else 0.0
    p_split = R * R + T * T - 2.0 * R * T * M

    def block(b, start, stop):
        g = substream(seed, _STREAM_HOM, b)
        idx, delay, is_qd = _photons(model, start, stop, bright, g)
        n = idx.size
        long_arm = g.random(n) < R
        slot = idx + long_arm
        u_route = g.random(n)
        # independent routing
        det = np.where(long_arm, u_route >= T, u_route < T).astype(np.uint16)

        # pairs straddling a block boundary are routed independently (1 in 2^18 slots)
        order = np.argsort(slot, kind="stable")
        s_sorted = slot[order]
        uniq, first, cnt = np.unique(s_sorted, return_index=True, return_counts=True)
        pair_first = first[cnt == 2]
        i1, i2 = order[pair_first], order[pair_first + 1]
        collide = (long_arm[i1] != long_arm[i2]) & is_qd[i1] & is_qd[i2]
        i1, i2 = i1[collide], i2[collide]
        if i1.size:
            i_long = np.where(long_arm[i1], i1, i2)
            i_short = np.where(long_arm[i1], i2, i1)
            u = g.random(i1.size)
            v = g.random(i1.size)
            split = u < p_split
            # split: long -> 0 (both transmitted) or long -> 1 (both reflected)
            long_det = np.where(split, (v >= T * T / (T * T + R * R)), v >= 0.5).astype(np.uint16)
            short_det = np.where(split, 1 - long_det, long_det).astype(np.uint16)
            det[i_long] = long_det
            det[i_short] = short_det
        t = np.rint(_T_OFFSET_PS + idx * T_ps + long_arm * T_ps + delay * 1e3).astype(np.int64)
        return t, det

    parts = _run_blocks(block, n_pulses, workers)
    t = np.concatenate([p[0] for p in parts])
    ch = np.concatenate([p[1] for p in parts])
    return _finish(model, n_pulses, t, ch)
