"""Smoke test for the compiled extension.

    cargo build --release -p kornlab-py
    cp target/release/libkornlab.so python/kornlab.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import kornlab  # noqa: E402


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    f = [[1.0, 2.0], [3.0, 4.0]]
    c, a = kornlab.split(f)
    for i in range(2):
        for j in range(2):
            assert close(c[i][j] + a[i][j], f[i][j], 1e-14)

    t = 0.3
    r = [[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]]
    assert kornlab.dist_so2(r) < 1e-14
    assert close(kornlab.closest_rotation(r), t, 1e-14)
    assert kornlab.closest_rotation([[1.0, 0.0], [0.0, -1.0]]) is None

    est = kornlab.korn_constant("square", 1)
    assert close(est["kappa_sq"], 2.0, 1e-12), est["kappa_sq"]
    disk = kornlab.korn_constant("disk", 2)
    assert disk["deflated"] and math.isfinite(disk["kappa_sq"])

    rep = kornlab.synthesize_extremal(n=128, r0=math.pi / 3)
    assert close(rep["ratio"], 1.0, 1e-3), rep["ratio"]

    table = kornlab.blowup_experiment([0.1, 0.05], angular_resolution=512, radial_layers=4)
    assert len(table["rows"]) == 2 and table["slope"] < 0

    try:
        kornlab.korn_constant("square", 1, "neumann")
    except ValueError:
        pass
    else:
        raise AssertionError("bad boundary condition accepted")

    print("kornlab", kornlab.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
