"""Writes f16_like.json: a synthetic longitudinal grid standing in for trimmed F-16 models.

States (V, alpha, theta, q), inputs (thrust lb, elevator deg). Stability
derivatives follow textbook dynamic-pressure scalings; they are not the
aircraft's data. Zero-order-hold discretization at DT.
"""
import json
import math
import re
import sys

import numpy as np
from scipy.linalg import expm

DT = 0.1
G = 32.17
MASS = 20500.0 / G
TRIMS = [400.0, 500.0, 600.0, 700.0, 800.0, 900.0]


def continuous(v):
    qbar = (v / 500.0) ** 2
    # Phugoid damping vanishes at the slow end of the envelope.
    xu = -0.12 * (v - 400.0) / 500.0 - 0.005
    xa = 12.0 * qbar - 20.0
    za = -0.9 * math.sqrt(qbar)
    zu = -2.0 * G / v / v
    ma = -6.0 * qbar
    mq = -1.1 * (v / 500.0)
    mu = 1e-4
    a = np.array([
        [xu, xa, -G, 0.0],
        [zu, za, 0.0, 1.0],
        [0.0, 0.0, 0.0, 1.0],
        [mu, ma, 0.0, mq],
    ])
    b = np.array([
        [1.0 / MASS, 0.0],
        [0.0, -0.0015 * math.sqrt(qbar)],
        [0.0, 0.0],
        [0.0, -0.2 * qbar],
    ])
    return a, b


def discretize(a, b):
    n, m = b.shape
    blk = np.zeros((n + m, n + m))
    blk[:n, :n] = a
    blk[:n, n:] = b
    e = expm(blk * DT)
    return e[:n, :n], e[:n, n:]


def main():
    grid = []
    for v in TRIMS:
        ad, bd = discretize(*continuous(v))
        rho = max(abs(np.linalg.eigvals(ad)))
        print(f"V={v:.0f} radius={rho:.6f}", file=sys.stderr)
        grid.append({"v": v, "A": ad.tolist(), "B": bd.tolist()})
    config = {
        "name": "f16_like",
        "description": "Longitudinal F-16-like plant. Weights, C, x0, model order, "
        "order sweep and velocity range are the reference values; the grid matrices "
        "are synthetic (see gen_f16_like.py).",
        "n": 4,
        "m": 2,
        "basis": {"family": "legendre", "nOrd": 5, "N": 7},
        "param_scale": {"vmin": TRIMS[0], "vmax": TRIMS[-1]},
        "grid": grid,
        "C": [[1, 0, 0, 0], [0, 1, 0, 0], [0, -1, 1, 0]],
        "Qy": [[0.1, 0, 0], [0, 10, 0], [0, 0, 10]],
        "R": [[1e-4, 0], [0, 0.1]],
        "x0": [0, 0, 30 * math.pi / 180, 0],
        "orders": list(range(1, 8)),
    }
    text = json.dumps(config, indent=2)
    # One line per matrix row.
    text = re.sub(r"\[\s*([-0-9.e,\s]+?)\s*\]", lambda mt: "[" + re.sub(r"\s+", " ", mt.group(1)) + "]", text)
    sys.stdout.write(text + "\n")


if __name__ == "__main__":
    main()
