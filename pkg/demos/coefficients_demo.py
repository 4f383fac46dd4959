"""Limit coefficients for the Gaussian and bump correlation models.

Prints D(v), E(v) and the angular rate a(|v|) for a few momenta and the
finite-difference residual of E = div D.

    python demos/coefficients_demo.py
"""
import math

import numpy as np

from wavedrift import coefficients, verify_divergence_identity
from wavedrift.field import BumpFieldSpec, GaussianCorrelation, PolynomialBump

models = {
    "gaussian": GaussianCorrelation(),
    "bump": BumpFieldSpec(PolynomialBump(1.0, 1.0, 4), 2.0).correlation(),
}

for name, model in models.items():
    print(f"== {name}")
    for speed in (0.5, 1.0, 2.0):
        v = speed * np.array([math.cos(0.3), math.sin(0.3)])
        c = coefficients(model, v)
        res = verify_divergence_identity(model, v).max()
        print(f"|v|={speed:4.1f}  a={c.a:.6f}  E=({c.E[0]:+.5f}, {c.E[1]:+.5f})  "
              f"|E - div D|={res:.1e}")

print(f"reference a(1) for the Gaussian model: sqrt(2 pi)/2 = {math.sqrt(2 * math.pi) / 2:.6f}")
