"""Smoke test for the infgmres Python bindings.

Build and install the extension first, e.g.

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/infgmres-*.whl
"""

import math
import os
import tempfile

import infgmres


def main():
    problem = infgmres.Problem.time_delay(200, seed=3)
    assert problem.dim == 200

    run = infgmres.solve(problem, mu_ref=0.2, j_max=40, eps=1e-10, inner="perturbed", seed=3)
    assert run.converged, run
    assert len(run.trace) == run.iterations
    assert list(infgmres.TRACE_HEADER)[0] == "iter"

    sol = run.solution
    ref = sol.true_relative_residual(0.2, problem)
    assert ref < 1e-8, ref
    for mu, res in sol.sweep([0.025, 0.05, 0.1], problem):
        assert res is not None and res <= 10 * ref, (mu, res)

    x = sol.evaluate(0.1)
    assert math.isclose(problem.relative_residual(0.1, x), sol.true_relative_residual(0.1, problem))

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "solution.json")
        sol.save(path)
        back = infgmres.Solution.load(path)
        assert back.evaluate(0.1) == x

    helm = infgmres.Problem.helmholtz_fd(16).rescale(1.5)
    run = infgmres.solve(helm, mu_ref=1.0, j_max=60, eps=1e-12, inner="bicgstab")
    rel = run.solution.true_relative_residual(1.0, helm)
    assert rel < 1e-8, rel

    try:
        infgmres.solve(problem, mu_ref=0.2, inner="multigrid")
    except ValueError as e:
        assert "multigrid" in str(e)
    else:
        raise AssertionError("unknown inner solver accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
