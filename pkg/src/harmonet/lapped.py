"""Windowed cosine/sine transform identities behind strided filter banks.

A DCT window slid with the right stride recovers the sine-transform
information a single window lacks: the sine coefficient of a window equals a
shifted-cosine sum, and for integer shifts delta = N*(1+4z)/(2k) it equals
the plain cosine coefficient of the window moved by delta. The window-shift
form is exact on N-periodic signals with even k; other regimes are measured,
not asserted.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class WindowedSignal:
    """A length-N analysis window into a longer 1-D signal."""

    samples: np.ndarray
    start: int = 0
    length: int = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        length = self.length if self.length is not None else samples.size - self.start
        object.__setattr__(self, "length", length)
        if self.start < 0 or self.start + length > samples.size:
            raise ValueError("window does not fit inside the signal")

    @property
    def values(self):
        return self.samples[self.start:self.start + self.length]


def _window_values(w):
    if isinstance(w, WindowedSignal):
        return w.values
    return np.asarray(w, dtype=np.float64)


def dct2_coeff(w, k):
    """F_k = sum_n x_n cos(pi*(n+1/2)*k/N)."""
    x = _window_values(w)
    n_len = x.size
    if not 0 <= k < n_len:
        raise ValueError(f"k must be in [0, {n_len}), got {k}")
    n = np.arange(n_len)
    return float(x @ np.cos(np.pi * (n + 0.5) * k / n_len))


def dst_coeff(w, k):
    """G_k = sum_n x_n sin(pi*(n+1/2)*k/N)."""
    x = _window_values(w)
    n_len = x.size
    if not 0 <= k < n_len:
        raise ValueError(f"k must be in [0, {n_len}), got {k}")
    n = np.arange(n_len)
    return float(x @ np.sin(np.pi * (n + 0.5) * k / n_len))


def dst_as_shifted_cos(w, k, z):
    """G_k rewritten as sum_n x_n cos(pi/2 + 2*pi*z - pi*(n+1/2)*k/N)."""
    x = _window_values(w)
    n_len = x.size
    n = np.arange(n_len)
    return float(x @ np.cos(np.pi / 2 + 2 * np.pi * z - np.pi * (n + 0.5) * k / n_len))


def shift_delta(n_len, k, z):
    """The pixel shift delta = N*(1+4z)/(2k) as an exact rational."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return Fraction(n_len * (1 + 4 * z), 2 * k)


def delta_is_integer(n_len, k, z):
    return shift_delta(n_len, k, z).denominator == 1


def verify_shifted_cosine(n_len, k, z, trials=100, seed=0):
    """Max |G_k - sum_n x_n cos(pi*(n - delta + 1/2)*k/N)| over random windows.

    Holds for every integer z with no boundary assumption (delta enters the
    cosine argument only).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    delta = float(shift_delta(n_len, k, z))
    n = np.arange(n_len)
    basis = np.cos(np.pi * (n - delta + 0.5) * k / n_len)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(n_len)
        worst = max(worst, abs(dst_coeff(x, k) - float(x @ basis)))
    return worst


def verify_window_shift(n_len, k, z, long_signal):
    """Max |DST(window at s) - DCT(window at s + delta)| over all offsets.

    Requires integer delta; exactness additionally needs an N-periodic signal
    and even k, which callers asserting on the result must provide.
    """
    delta_frac = shift_delta(n_len, k, z)
    if delta_frac.denominator != 1:
        raise ValueError(f"delta={delta_frac} is not an integer pixel shift")
    delta = int(delta_frac)
    x = np.asarray(long_signal, dtype=np.float64)
    last = x.size - n_len - delta
    if last < 0:
        raise ValueError("signal too short for the shifted window")
    worst = 0.0
    for s in range(last + 1):
        lhs = dst_coeff(x[s:s + n_len], k)
        rhs = dct2_coeff(x[s + delta:s + delta + n_len], k)
        worst = max(worst, abs(lhs - rhs))
    return worst


def periodic_signal(n_len, periods=6, seed=0):
    """Random N-periodic test signal spanning the given number of periods."""
    rng = np.random.default_rng(seed)
    return np.tile(rng.standard_normal(n_len), periods)


def identity_suite(max_n=32, tol=1e-12, shift_tol=1e-10, seed=0):
    """Run the verification suites; returns a list of result rows.

    Rows are dicts with name/max_err/tol/passed. Asserted rows cover the
    sine-to-cosine identities for all N <= max_n, 1 <= k < N, z in {-3, 0, 5}
    and the window-shift identity in its exact regime (N-periodic signals,
    even k, integer delta). The odd-k and aperiodic window-shift cases are
    reported with tol=None and always pass (informational).
    """
    rows = []

    worst = 0.0
    rng = np.random.default_rng(seed)
    for n_len in range(2, max_n + 1):
        for k in range(1, n_len):
            x = rng.standard_normal(n_len)
            g = dst_coeff(x, k)
            for z in (-3, 0, 5):
                worst = max(worst, abs(g - dst_as_shifted_cos(x, k, z)))
    rows.append({"name": "dst equals shifted-cosine sum (all integer z)",
                 "max_err": worst, "tol": tol, "passed": worst < tol})

    worst = 0.0
    for n_len in range(2, max_n + 1):
        for k in range(1, n_len):
            for z in (-3, 0, 5):
                worst = max(worst, verify_shifted_cosine(n_len, k, z, trials=5,
                                                         seed=seed + n_len + k))
    rows.append({"name": "dst equals cosine sum re-indexed by delta",
                 "max_err": worst, "tol": tol, "passed": worst < tol})

    worst = 0.0
    cases = 0
    for n_len in range(2, max_n + 1, 2):
        for k in range(2, n_len, 2):
            for z in (0, 1):
                if not delta_is_integer(n_len, k, z):
                    continue
                delta = int(shift_delta(n_len, k, z))
                periods = max(6, (delta + 2 * n_len) // n_len + 2)
                sig = periodic_signal(n_len, periods=periods, seed=seed + cases)
                worst = max(worst, verify_window_shift(n_len, k, z, sig))
                cases += 1
    rows.append({"name": f"window-shift identity, periodic even-k regime ({cases} cases)",
                 "max_err": worst, "tol": shift_tol, "passed": worst < shift_tol})

    worst = 0.0
    for n_len in (4, 8, 16):
        for k in range(1, n_len, 2):
            for z in (0, 1):
                if delta_is_integer(n_len, k, z):
                    sig = periodic_signal(n_len, periods=8, seed=seed + k)
                    worst = max(worst, verify_window_shift(n_len, k, z, sig))
    rows.append({"name": "window-shift violation, odd k (reported only)",
                 "max_err": worst, "tol": None, "passed": True})

    rng2 = np.random.default_rng(seed + 1)
    worst = 0.0
    for n_len in (4, 8):
        for k in (2, 4):
            if k >= n_len or not delta_is_integer(n_len, k, 0):
                continue
            sig = rng2.standard_normal(6 * n_len)  # aperiodic
            worst = max(worst, verify_window_shift(n_len, k, 0, sig))
    rows.append({"name": "window-shift violation, aperiodic signal (reported only)",
                 "max_err": worst, "tol": None, "passed": True})

    return rows
