"""Smoke test for the Python bindings.

Build and install first, e.g. `pip install --no-build-isolation crates/py`
or `maturin develop -m crates/py/Cargo.toml`, then run this file.
"""

import json

import fairsched_py as fs


def main():
    inst = fs.generate(5, n_tasks=6, n_workers=2, delta=5.0, epsilon=0.05)
    doc = json.loads(inst)
    assert doc["n_tasks"] == 6 and doc["n_workers"] == 2
    assert fs.generate(5, n_tasks=6, n_workers=2) == inst

    mean = json.loads(fs.solve(inst, method="mean"))
    assert all(sum(row) == 1 for row in mean["assignment"])

    dro = json.loads(fs.solve(inst, method="dro", max_iters=10))
    gs = [r["g"] for r in dro["trace"]]
    assert all(b >= a - 1e-6 for a, b in zip(gs, gs[1:])), gs

    report = json.loads(fs.evaluate(inst, json.dumps(mean), n_samples=2000, seed=1))
    assert 0.0 <= report["violation_probability"] <= 1.0
    assert report["n_samples"] == 2000

    try:
        fs.generate(1, epsilon=1.5)
    except ValueError as e:
        assert "epsilon" in str(e)
    else:
        raise AssertionError("expected ValueError")

    print(
        "ok: mean violation %.3f, dro reward %.2f vs mean reward %.2f"
        % (report["violation_probability"], dro["reward"], mean["reward"])
    )


if __name__ == "__main__":
    main()
