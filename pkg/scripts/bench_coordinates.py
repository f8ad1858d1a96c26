"""Timing sweep of coordinate computation and deformation across template
resolutions (mean value vs Green).

Usage: python scripts/bench_coordinates.py
"""

import time

import numpy as np

from cageforge import apply_deformation, compute_gc, compute_mvc
from cageforge.shapes import cube, icosphere


def main():
    cage = cube(side=3.0, center=(0, 0, 0))
    print(f"{'template':>10} {'verts':>7} {'mvc [s]':>9} {'gc [s]':>9} "
          f"{'deform [ms]':>12}")
    for level in (2, 3, 4):
        template = icosphere(level)
        t0 = time.monotonic()
        mvc = compute_mvc(template, cage)
        t_mvc = time.monotonic() - t0
        t0 = time.monotonic()
        gc = compute_gc(template, cage)
        t_gc = time.monotonic() - t0
        deformed = 1.2 * cage.vertices + np.array([0.1, 0.0, 0.0])
        t0 = time.monotonic()
        for _ in range(50):
            apply_deformation(mvc, deformed)
        t_apply = (time.monotonic() - t0) / 50 * 1e3
        print(f"{'ico' + str(level):>10} {template.vertex_count:>7} "
              f"{t_mvc:>9.3f} {t_gc:>9.3f} {t_apply:>12.3f}")


if __name__ == "__main__":
    main()
