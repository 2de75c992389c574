#!/usr/bin/env python3
"""Regenerate the golden fixtures in fixtures/ with NumPy.

The expected outputs are computed here from first principles (edge-padded
convolutions, numpy.fft, index arithmetic), independently of the Rust code
that `mrcdm verify-fixtures` checks against them.

    python3 scripts/make_fixtures.py [fixtures_dir]
"""

import csv
import os
import sys

import numpy as np

WINDOWS = (5, 25, 51)
TAU, DIM, CANVAS = 3, 32, 32
N_FFT, HOP = 64, 16


def write(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def moving_average(x, w):
    h = (w - 1) // 2
    p = np.pad(x, h, mode="edge")
    return np.array([p[t : t + w].sum() / w for t in range(len(x))])


def decompose(x):
    m1, m2, m3 = (moving_average(x, w) for w in WINDOWS)
    return m1 - m2, m2 - m3, m3, x - m1


def column_starts(n):
    q = (n - DIM) // TAU + 1
    s = [j * TAU for j in range(q)]
    if (n - DIM) % TAU:
        s.append(n - DIM)
    return s


def stft(x):
    k = np.arange(N_FFT)
    win = 0.5 - 0.5 * np.cos(2 * np.pi * k / N_FFT)
    frames = (len(x) - N_FFT) // HOP + 1
    out = []
    for f in range(frames):
        spec = np.fft.rfft(x[f * HOP : f * HOP + N_FFT] * win)
        out.append(spec[:CANVAS])
    return np.array(out)  # frames x 32


def interpolate(vals):
    obs = np.array([v is not None for v in vals])
    idx = np.arange(len(vals))
    known = np.array([v for v in vals if v is not None])
    return np.interp(idx, idx[obs], known)


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "fixtures")
    os.makedirs(out, exist_ok=True)
    rng = np.random.default_rng(0)
    index = []

    x = rng.standard_normal(300)
    write(os.path.join(out, "decompose_input.csv"), ["value"], [[v] for v in x])
    t1, t2, t3, r = decompose(x)
    write(os.path.join(out, "decompose_expected.csv"), ["trend1", "trend2", "trend3", "residual"], zip(t1, t2, t3, r))
    index.append(["decompose", "decompose", "decompose_input.csv", "decompose_expected.csv", 1e-12])
    index.append(["fuse_defuse", "fuse_defuse", "embed_input.csv", "", 0.0])

    t = np.arange(96)
    c = np.cos(2 * np.pi * 5 * t / N_FFT) + 0.5 * np.cos(2 * np.pi * 12 * t / N_FFT + 0.3)
    write(os.path.join(out, "stft_input.csv"), ["value"], [[v] for v in c])
    spec = stft(c)
    rows = []
    for ch, part in enumerate((spec.real, spec.imag)):
        for row in range(CANVAS):
            for col in range(spec.shape[0]):
                rows.append([ch, row, col, part[col, row]])
    write(os.path.join(out, "stft_expected.csv"), ["channel", "row", "col", "value"], rows)
    index.append(["stft", "stft", "stft_input.csv", "stft_expected.csv", 1e-9])

    e = rng.standard_normal(96)
    write(os.path.join(out, "embed_input.csv"), ["value"], [[v] for v in e])
    rows = [[row, col, e[s + row]] for col, s in enumerate(column_starts(len(e))) for row in range(DIM)]
    write(os.path.join(out, "embed_expected.csv"), ["row", "col", "value"], rows)
    index.append(["delay_embed", "delay_embed", "embed_input.csv", "embed_expected.csv", 1e-12])

    z = 13.3 + 8.6 * rng.standard_normal(200)
    write(os.path.join(out, "normalize_input.csv"), ["value"], [[v] for v in z])
    mu, sd = z.mean(), z.std()  # population std
    write(os.path.join(out, "normalize_expected.csv"), ["value"], [[(v - mu) / sd] for v in z])
    index.append(["normalize", "normalize", "normalize_input.csv", "normalize_expected.csv", 1e-12])

    vals = [0.0, None, None, 9.0, 4.0, None, 2.0, None]
    write(os.path.join(out, "interpolate_input.csv"), ["value"], [[v] for v in vals])
    write(os.path.join(out, "interpolate_expected.csv"), ["value"], [[v] for v in interpolate(vals)])
    index.append(["interpolate", "interpolate", "interpolate_input.csv", "interpolate_expected.csv", 1e-12])

    pred = np.array([1.0, 2.0, 0.5, -1.0, 3.0, 2.0])
    truth = np.array([3.0, 2.0, 0.0, -1.0, 1.0, 2.5])
    write(os.path.join(out, "metrics_input.csv"), ["pred", "truth"], zip(pred, truth))
    d = pred - truth
    mse = float(np.mean(d * d))
    write(os.path.join(out, "metrics_expected.csv"), ["mse", "mae", "rmse"], [[mse, float(np.mean(np.abs(d))), mse**0.5]])
    index.append(["metrics", "metrics", "metrics_input.csv", "metrics_expected.csv", 1e-12])

    write(os.path.join(out, "index.csv"), ["name", "operation", "input", "expected", "tolerance"], index)


if __name__ == "__main__":
    main()
