"""The 2-D DCT-II filter bank: construction, normalisation, ordering, export.

Filters are indexed by the frequency pair (u, v) with u the vertical
frequency (filter rows) and v the horizontal one; algorithms downstream are
invariant to a consistent transpose, so the convention is fixed here once.

    phi[u, v][x, y] = cos(pi*(x+1/2)*u/K) * cos(pi*(y+1/2)*v/K)
    psi[u, v]       = phi[u, v] / ||phi[u, v]||_1

Zigzag order enumerates (u, v) by ascending u+v, ties by ascending u; the
lambda subset keeps pairs with u+v < lambda and a truncation prefix keeps the
first T zigzag entries.
"""

import csv
import os

import numpy as np


def zigzag_order(k):
    """All (u, v) pairs ordered by ascending u+v, ties by ascending u."""
    return sorted(((u, v) for u in range(k) for v in range(k)),
                  key=lambda p: (p[0] + p[1], p[0]))


class FilterBank:
    """K*K fixed cosine filters, raw (phi) and L1-normalised (psi)."""

    def __init__(self, k):
        if k < 1:
            raise ValueError(f"kernel size must be >= 1, got {k}")
        self.k = k
        x = np.arange(k, dtype=np.float64) + 0.5
        freqs = np.arange(k, dtype=np.float64)
        cosines = np.cos(np.pi * np.outer(freqs, x) / k)  # cosines[u, x]
        self.phi = np.einsum("ux,vy->uvxy", cosines, cosines)
        l1 = np.abs(self.phi).sum(axis=(2, 3))
        self.psi = self.phi / l1[:, :, None, None]
        self.order = zigzag_order(k)

    def lambda_subset(self, lam):
        """Pairs with u+v < lambda, in zigzag order; lambda >= 2K-1 keeps all."""
        if lam < 1:
            raise ValueError(f"lambda must be >= 1, got {lam}")
        return [(u, v) for (u, v) in self.order if u + v < lam]

    def truncation_prefix(self, t):
        """First T pairs of the zigzag order."""
        if not 1 <= t <= self.k ** 2:
            raise ValueError(f"truncation must be in [1, {self.k ** 2}], got {t}")
        return self.order[:t]

    def filters(self, pairs=None, normalized=True, dtype=np.float64):
        """Stack the selected filters into an (F, K, K) array."""
        pairs = self.order if pairs is None else list(pairs)
        source = self.psi if normalized else self.phi
        out = np.stack([source[u, v] for (u, v) in pairs])
        return out.astype(dtype, copy=False)


def build_basis(k):
    return FilterBank(k)


def write_pgm(path, values):
    """8-bit binary PGM, filter min -> 0 and max -> 255 (constant -> 255)."""
    vmin = values.min()
    vmax = values.max()
    if vmax > vmin:
        pixels = np.rint((values - vmin) / (vmax - vmin) * 255).astype(np.uint8)
    else:
        pixels = np.full(values.shape, 255, dtype=np.uint8)
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def read_pgm(path):
    with open(path, "rb") as f:
        data = f.read()
    header, _, rest = data.partition(b"255\n")
    fields = header.split()
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = int(fields[1]), int(fields[2])
    return np.frombuffer(rest[: w * h], dtype=np.uint8).reshape(h, w)


def export_filters(bank, pairs, directory):
    """Write one PGM per normalised filter plus a CSV of the raw psi values.

    CSV columns are u,v,x,y,value with x the row coordinate. Returns the list
    of files written (CSV last).
    """
    os.makedirs(directory, exist_ok=True)
    pairs = bank.order if pairs is None else list(pairs)
    written = []
    for (u, v) in pairs:
        path = os.path.join(directory, f"filter_u{u}_v{v}.pgm")
        write_pgm(path, bank.psi[u, v])
        written.append(path)
    csv_path = os.path.join(directory, "filters.csv")
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["u", "v", "x", "y", "value"])
        for (u, v) in pairs:
            for x in range(bank.k):
                for y in range(bank.k):
                    writer.writerow([u, v, x, y, f"{bank.psi[u, v, x, y]:.12g}"])
    written.append(csv_path)
    return written


def load_filter_csv(path):
    """Reload an exported CSV into a dict {(u, v): K x K array}."""
    cells = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            key = (int(row["u"]), int(row["v"]))
            cells.setdefault(key, {})[(int(row["x"]), int(row["y"]))] = float(row["value"])
    out = {}
    for key, values in cells.items():
        k = int(round(len(values) ** 0.5))
        arr = np.empty((k, k))
        for (x, y), val in values.items():
            arr[x, y] = val
        out[key] = arr
    return out
