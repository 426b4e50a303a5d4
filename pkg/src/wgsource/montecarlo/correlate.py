"""Start-stop correlation histograms and the peak-area analyses built on them."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numba as nb
import numpy as np
from scipy.optimize import curve_fit
from scipy.special import erfc

__all__ = [
    "CorrelationHistogram",
    "G2Estimate",
    "VrawEstimate",
    "EnvelopeFit",
    "correlate",
    "peak_areas",
    "extract_g2",
    "extract_vraw",
    "central_ratio",
    "fit_bunching_envelope",
    "exp_irf_peak",
    "write_histogram_csv",
]


@dataclass(frozen=True, eq=False)
class CorrelationHistogram:
    """Counts of delays t_b - t_a; bin k covers [(k - 1/2) w, (k + 1/2) w)."""

    bin_width: int
    counts: np.ndarray
    rep_period: float | None = None

    def __post_init__(self):
        if self.counts.ndim != 1 or self.counts.size % 2 != 1:
            raise ValueError("histogram must have an odd number of bins centred on zero")
        if np.any(self.counts < 0):
            raise ValueError("counts must be >= 0")

    @property
    def half_bins(self):
        return self.counts.size // 2

    @property
    def delays(self):
        return (np.arange(self.counts.size) - self.half_bins) * self.bin_width

    @property
    def window(self):
        return self.half_bins * self.bin_width

    def __add__(self, other):
        if self.bin_width != other.bin_width or self.counts.size != other.counts.size:
            raise ValueError("histograms are not compatible")
        return CorrelationHistogram(self.bin_width, self.counts + other.counts, self.rep_period)


class G2Estimate(NamedTuple):
    g2: float
    uncertainty: float
    central: float
    side_mean: float
    n_side: int


class VrawEstimate(NamedTuple):
    V_raw: float
    uncertainty: float
    A_parallel: float
    A_perp: float


class EnvelopeFit(NamedTuple):
    amplitude: float
    amplitude_err: float
    rate_per_us: float
    rate_err: float
    baseline: float


@nb.njit(cache=True)
def _correlate_kernel(a, b, bin_width, half_bins, counts):
    # two-pointer sweep: for each a, b events with |t_b - t_a| <= window
    window = half_bins * bin_width + bin_width // 2
    start = 0
    nb_ = b.size
    for i in range(a.size):
        ta = a[i]
        while start < nb_ and b[start] < ta - window:
            start += 1
        j = start
        while j < nb_ and b[j] <= ta + window:
            d = b[j] - ta
            # round half up to the bin centred on multiples of bin_width
            k = (d + bin_width // 2) // bin_width if d >= 0 else -((-d + (bin_width - 1) // 2) // bin_width)
            if -half_bins <= k <= half_bins:
                counts[k + half_bins] += 1
            j += 1


def correlate(a, b, bin_width, window, rep_period=None):
    """Histogram all pairwise delays t_b - t_a within +-window (ps).

    ``a``/``b`` are ClickStreams or sorted integer timestamp arrays. Runs in
    O(N + pairs) via a sorted two-pointer sweep.
    """
    if rep_period is None:
        rep_period = getattr(a, "rep_period_ps", None)
    if rep_period is not None and window < rep_period:
        raise ValueError("correlation window must span at least one repetition period")
    bin_width = int(bin_width)
    if bin_width <= 0:
        raise ValueError("bin_width must be a positive integer (ps)")
    ta = np.ascontiguousarray(getattr(a, "timestamps", a), dtype=np.int64)
    tb = np.ascontiguousarray(getattr(b, "timestamps", b), dtype=np.int64)
    half = int(math.ceil(window / bin_width))
    counts = np.zeros(2 * half + 1, dtype=np.int64)
    _correlate_kernel(ta, tb, bin_width, half, counts)
    return CorrelationHistogram(bin_width, counts, rep_period)


def _period(hist, rep_period):
    rep_period = rep_period if rep_period is not None else hist.rep_period
    if rep_period is None:
        raise ValueError("repetition period unknown")
    return float(rep_period)


def peak_areas(hist, rep_period=None):
    """Counts integrated over each pulse-period peak; returns (k, area) for
    every peak fully inside the histogram window."""
    T = _period(hist, rep_period)
    d = hist.delays
    k = np.floor(d / T + 0.5).astype(np.int64)
    kmax = int(math.floor((hist.window - T / 2) / T))
    sel = np.abs(k) <= kmax
    ks = np.arange(-kmax, kmax + 1)
    areas = np.bincount(k[sel] + kmax, weights=hist.counts[sel], minlength=2 * kmax + 1)
    return ks, areas


def _norm_peaks(ks, T, norm_delay, span):
    k0 = int(round(norm_delay / T))
    want = set(range(k0 - span, k0 + span + 1)) | set(range(-k0 - span, -k0 + span + 1))
    want.discard(0)
    kmax = ks.max()
    if max(abs(k) for k in want) > kmax:
        raise ValueError(f"normalisation delay {norm_delay} ps (+-{span} peaks) exceeds the window")
    return np.array(sorted(want))


def exp_irf_peak(tau, gamma, irf_sigma):
    """Unit-area two-sided exponential (rate ``gamma`` per ps) convolved with a
    Gaussian of standard deviation ``irf_sigma`` (ps)."""
    tau = np.asarray(tau, dtype=float)
    if irf_sigma <= 0:
        return 0.5 * gamma * np.exp(-gamma * np.abs(tau))
    s = irf_sigma
    a = gamma * s * s
    with np.errstate(over="ignore", invalid="ignore"):
        lo = np.exp(0.5 * gamma * a - gamma * tau) * erfc((a - tau) / (math.sqrt(2) * s))
        hi = np.exp(0.5 * gamma * a + gamma * tau) * erfc((a + tau) / (math.sqrt(2) * s))
    return 0.25 * gamma * (np.nan_to_num(lo) + np.nan_to_num(hi))


def extract_g2(hist, rep_period=None, norm_delay=50_000_000, span=10, mode="area",
               irf_sigma=50.0, decay_rate=None):
    """g2(0) as the zero-delay peak relative to the mean peak near ``norm_delay``.

    ``mode="area"`` integrates counts per period. ``mode="fit"`` fits the
    summed normalisation peaks with a two-sided exponential convolved with a
    Gaussian IRF, then the central amplitude with that shape held fixed.
    """
    T = _period(hist, rep_period)
    ks, areas = peak_areas(hist, T)
    norm_k = _norm_peaks(ks, T, norm_delay, span)
    kmax = ks.max()
    side = areas[norm_k + kmax]
    n_side = side.size
    side_total = side.sum()
    if side_total <= 0:
        raise ValueError("normalisation peaks are empty")
    central = areas[kmax]

    if mode == "area":
        side_mean = side_total / n_side
        g2 = central / side_mean
        var = max(central, 1.0) / side_mean ** 2 + central ** 2 / side_mean ** 4 * side_mean / n_side
        return G2Estimate(g2, math.sqrt(var), float(central), float(side_mean), n_side)
    if mode != "fit":
        raise ValueError(f"unknown mode {mode!r}")

    w = hist.bin_width
    d = hist.delays
    nb_half = int(T / 2 // w)
    offsets = np.arange(-nb_half, nb_half + 1) * w
    centre_bin = hist.half_bins

    def stack(k):
        i = centre_bin + int(round(k * T / w))
        return hist.counts[i - nb_half:i + nb_half + 1].astype(float)

    side_profile = sum(stack(k) for k in norm_k)
    # peak centres k T are not bin-aligned; re-centre via the fitted offset
    g0 = decay_rate / 1000.0 if decay_rate else 1.0 / 640.0

    def model(x, amp, gamma, shift):
        return amp * w * exp_irf_peak(x - shift, gamma, irf_sigma)

    p0 = [side_profile.sum(), g0, 0.0]
    sig = np.sqrt(np.maximum(side_profile, 1.0))
    popt, pcov = curve_fit(model, offsets, side_profile, p0=p0, sigma=sig, absolute_sigma=True,
                           maxfev=20000)
    amp_side, gamma_fit, shift = popt
    shape = model(offsets, 1.0, gamma_fit, shift)
    c_prof = stack(0)
    amp_c = c_prof.sum() / shape.sum()
    side_mean = amp_side / n_side
    g2 = amp_c / side_mean
    var_c = max(c_prof.sum(), 1.0) / shape.sum() ** 2
    var_s = pcov[0, 0] / n_side ** 2
    err = math.sqrt(var_c / side_mean ** 2 + amp_c ** 2 * var_s / side_mean ** 4)
    return G2Estimate(g2, err, float(amp_c), float(side_mean), n_side)


def central_ratio(hist, T, norm_delay=None, span=2):
    """Zero-delay peak area over the mean long-delay peak area.

    Returns (ratio, central area, long-delay mean, number of reference peaks).
    """
    ks, areas = peak_areas(hist, T)
    kmax = ks.max()
    if kmax < 5:
        raise ValueError("histogram must span at least 5 repetition periods")
    if norm_delay is None:
        norm_k = np.array([k for k in ks if abs(k) > kmax - span])
    else:
        norm_k = _norm_peaks(ks, T, norm_delay, span)
    a_inf = areas[norm_k + kmax].mean()
    if a_inf <= 0:
        raise ValueError("long-delay peaks are empty")
    a0 = areas[kmax]
    return a0 / a_inf, a0, a_inf, norm_k.size


def extract_vraw(co, cross, rep_period=None, norm_delay=None, span=2):
    """Raw HOM visibility from co- and cross-polarised histograms.

    Each central area is rescaled by its own long-delay peak area before
    V_raw = (A_perp - A_par) / A_perp. By default the ``span`` outermost
    peaks on each side serve as the long-delay reference.
    """
    T = _period(co, rep_period)
    a_par, c_par, inf_par, n_par = central_ratio(co, T, norm_delay, span)
    a_perp, c_perp, inf_perp, n_perp = central_ratio(cross, T, norm_delay, span)
    if a_perp <= 0:
        raise ValueError("cross-polarised central area is zero")
    v = (a_perp - a_par) / a_perp
    # Poisson errors on the four raw areas
    rel_par2 = 1.0 / max(c_par, 1.0) + 1.0 / (inf_par * n_par)
    rel_perp2 = 1.0 / max(c_perp, 1.0) + 1.0 / (inf_perp * n_perp)
    ratio = a_par / a_perp
    err = ratio * math.sqrt(rel_par2 + rel_perp2)
    return VrawEstimate(v, err, a_par, a_perp)


def fit_bunching_envelope(hist, rep_period=None, min_delay=0.0, max_delay=None):
    """Fit side-peak areas with A_inf (1 + b exp(-lambda |tau|)).

    Returns the normalised peak amplitude 1 + b and lambda in us^-1. Peaks with
    |tau| < ``min_delay`` (ps) are excluded, e.g. to skip deadtime distortion.
    """
    T = _period(hist, rep_period)
    ks, areas = peak_areas(hist, T)
    tau = ks * T
    sel = (ks != 0) & (np.abs(tau) >= min_delay)
    if max_delay is not None:
        sel &= np.abs(tau) <= max_delay
    x = np.abs(tau[sel]) * 1e-6  # us
    y = areas[sel]
    if y.sum() <= 0:
        raise ValueError("no side-peak counts to fit")

    def model(x, base, b, lam):
        return base * (1.0 + b * np.exp(-lam * x))

    tail = y[x > np.percentile(x, 75)].mean()
    p0 = [tail, max(y[:10].mean() / tail - 1.0, 1e-3), 1.0 / max(x.max() / 10, 1e-3)]
    popt, pcov = curve_fit(model, x, y, p0=p0, sigma=np.sqrt(np.maximum(y, 1.0)),
                           absolute_sigma=True, maxfev=20000)
    err = np.sqrt(np.diag(pcov))
    return EnvelopeFit(1.0 + popt[1], float(err[1]), float(popt[2]), float(err[2]), float(popt[0]))


def write_histogram_csv(hist, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delay_ps", "counts"])
        w.writerows(zip(hist.delays.tolist(), hist.counts.tolist()))
