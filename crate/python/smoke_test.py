"""Quick end-to-end check of the cmflow_py extension."""

import math

import cmflow_py as cm


def main():
    assert cm.sigma([2.0, 3.0, 4.0], 2) == 26.0
    assert cm.sigma_matrix([[2.0, 1.0], [1.0, 2.0]], 2) == 3.0
    assert not cm.in_gamma_k([-1.0, 5.0, 5.0], 3)

    sphere = cm.Grid("latlong:24x48")
    assert len(sphere) == 24 * 48
    assert abs(sum(sphere.weights()) - 4 * math.pi) < 1e-12

    v = (0.3, -0.2, 0.1)
    f = [math.exp(-sum(a * b for a, b in zip(v, x))) for x in sphere.points()]
    xi, residual, iterations = cm.solve_xi(sphere, f)
    assert max(abs(a - b) for a, b in zip(xi, v)) < 1e-9, xi
    print(f"xi = {xi} after {iterations} iterations")

    circle = cm.Grid("circle:64")
    theta, converged, run = cm.sweep_theta(circle, 1, f="constant:1", h0="ball:1.25")
    assert converged and abs(theta * 1.25 - 1.0) < 1e-6, (theta, run)

    theta, converged, run = cm.sweep_theta(circle, 1, f="harmonic:0.3@2")
    assert converged and run.steps > 0, run
    js = [j for _, j in run.j_history]
    assert all(b <= a + 1e-9 * (1 + abs(a)) for a, b in zip(js, js[1:]))
    print(f"theta* = {theta:.9f}, {run}")

    run = cm.run_flow(circle, 1, f="constant:1", h0="ball:1", theta=1.5)
    assert run.classification == "expanded", run

    g = circle.density("harmonic:0.3@2")
    h, res, ok = cm.solve_elliptic(circle, g)
    assert ok and res < 1e-10

    report = cm.verify_chou_wang(sphere, 50, 7)
    assert report.passed and report.worst < report.bound, report
    print(report)
    print("smoke test passed")


if __name__ == "__main__":
    main()
