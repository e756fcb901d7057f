#!/usr/bin/env python3
"""Explicit Sobolev constants and zonal inequality checks on round spheres."""

import sys

# -------- knobs --------
DIMENSIONS = (3, 4, 5, 6)
RADII = (0.5, 1.0, 2.0)
FUNCTIONS = {
    "1": (1.0,),
    "1+c": (1.0, 1.0),
    "(1+c)^2": (1.0, 2.0, 1.0),
    "2-c": (2.0, -1.0),
}

sys.path.insert(0, "src")

from mcflow.analytic import (
    SphereScene,
    ZonalFunction,
    calibrated_sobolev_constant,
    hoffman_spruck_constant,
    sobolev_check_zonal,
)


def main():
    print("explicit constants (alpha = n/(n+1)):")
    for n in DIMENSIONS:
        alpha = n / (n + 1.0)
        with_pref = hoffman_spruck_constant(n, alpha, b_real=True)
        without = hoffman_spruck_constant(n, alpha, b_real=False)
        print(f"  n={n}: C(n,{alpha:.3f}) = {with_pref:.6f} (real bound), "
              f"{without:.6f} (imaginary bound)")

    print("\ncalibrated flat-ambient constants:")
    for n in DIMENSIONS:
        print(f"  n={n}: C_n = {calibrated_sobolev_constant(n):.6e}")

    print("\nzonal checks (verdict per checker):")
    for n in DIMENSIONS:
        for r in RADII:
            scene = SphereScene(n=n, r0=r)
            for label, coeffs in FUNCTIONS.items():
                v = ZonalFunction(coeffs)
                parts = []
                for which, kwargs in (
                    ("hoffman_spruck", {}),
                    ("gradient_lower_bound", {"s": 1.0}),
                    ("curvature_weighted", {}),
                ):
                    rep = sobolev_check_zonal(scene, 0.0, v, which, **kwargs)
                    parts.append(f"{which}:{'ok' if rep.holds else 'VIOLATED'}")
                print(f"  n={n} r={r:<4} v={label:<8} " + "  ".join(parts))


if __name__ == "__main__":
    main()
