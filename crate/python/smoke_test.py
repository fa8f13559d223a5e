"""Smoke test for the zrp extension module.

Build and install it first, e.g. `maturin develop -m crates/py/Cargo.toml`.
"""

import json
import math
import tempfile

import zrp


def main():
    p = json.loads(zrp.equilibrium(1.0))
    assert abs(p["beta"] - 1.0) < 1e-12, p["beta"]
    assert abs(sum(p["pmf"]) - 1.0) < 1e-12

    affine = json.loads(zrp.equilibrium(2.0, a=1.0, b=0.5))
    mean = sum(k * q for k, q in enumerate(affine["pmf"]))
    assert abs(mean - 2.0) < 1e-10

    assert abs(zrp.stable_density_at_origin(1.0, 1, 2.0) - (2 * math.pi) ** -0.5) < 1e-12
    assert abs(zrp.stable_density_at_origin(1.0, 1, 1.0) - math.pi ** -2) < 1e-12
    assert abs(zrp.normalizer(1000.0, 1, 1.5) - 1000.0 ** (2 / 3)) < 1e-9
    assert 0.0 < zrp.transition_probability(1, 1.5, 1.0, [0]) < 1.0
    assert zrp.fbm_covariance(0.5, 1.0, 2.0) == 1.0

    plan = json.dumps({
        "experiment": "lclt",
        "model": {"d": 1, "alpha": 1.5, "L": 64, "rate": {"kind": "linear", "a": 1.0}, "gamma": 1.0},
        "master_seed": 1,
    })
    with tempfile.TemporaryDirectory() as out:
        summary = json.loads(zrp.run(plan, out))
        assert summary["experiment"] == "lclt"
        ok, table = zrp.verify(plan, out)
        assert ok, table

    try:
        zrp.normalizer(1.0, 1, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("log normalizer at N = 1 should fail")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
