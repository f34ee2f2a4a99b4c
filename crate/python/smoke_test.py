"""Smoke test for the qmatmul Python extension.

Build and install first:  pip install --no-build-isolation ./crates/py   (or `maturin develop`
inside crates/py), then run  python python/smoke_test.py
"""

import json
import math

import qmatmul


def close(x, y, tol):
    return abs(x - y) <= tol


def main():
    i2 = [[1.0, 0.0], [0.0, 1.0]]

    r = qmatmul.multiply(i2, i2, method="swap", eps=0.05)
    assert r.within_bound(), r
    assert close(r.success_probability, 0.5, 1e-9), r.success_probability
    assert r.ledger.total_calls() > 0

    a = qmatmul.generate_matrix(4, 4.0, seed=3)
    b = qmatmul.generate_matrix(4, 4.0, seed=4)
    c = qmatmul.exact_product(a, b)
    for method in ("swap", "lcu", "sve", "hhl"):
        res = qmatmul.multiply(a, b, method=method, eps=0.05)
        assert res.within_bound(), (method, res)
        exact = qmatmul.multiply(a, b, method=method, exact_phase=True)
        assert exact.realized_error < 1e-10, (method, exact.realized_error)

    for method in ("swap", "sve", "hhl"):
        rep = qmatmul.readout_entries(a, b, method=method, eps_abs=0.05)
        worst = max(abs(rep.c_tilde[i][j] - c[i][j]) for i in range(4) for j in range(4))
        assert worst <= 0.05, (method, worst)
        assert close(worst, rep.max_observed_error, 1e-12)

    x = qmatmul.generate_vector(16, 64.0, seed=5)
    norm = math.sqrt(sum(v * v for v in x))
    for method in ("direct", "hamiltonian", "sparse", "dyadic", "signshift"):
        p = qmatmul.prepare(x, method=method, eps=0.05)
        assert p.within_bound(), (method, p.realized_distance, p.bound)
        overlap = abs(sum(amp.conjugate() * v / norm for amp, v in zip(p.amplitudes, x)))
        assert overlap >= 1 - 2 * 0.05, (method, overlap)

    report = qmatmul.run_experiment("sve", [1, 2])
    assert json.loads(report)["schema"] == 1
    assert qmatmul.verify_report(report) == []
    bad = json.loads(report)
    bad["rows"][0]["realized_error"] = 0.9
    violations = qmatmul.verify_report(json.dumps(bad))
    assert violations and violations[0][0] == 0

    try:
        qmatmul.multiply(i2, [[1.0, 2.0, 3.0]])
    except ValueError as e:
        assert "dimension" in str(e)
    else:
        raise AssertionError("conformability error expected")

    print("smoke test passed")


if __name__ == "__main__":
    main()
