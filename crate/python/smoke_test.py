"""Smoke test for the mixdyn Python extension.

Build first:
    cargo build --release -p mixdyn-py --features extension-module
then run:
    python3 python/smoke_test.py

The script imports `mixdyn` from PYTHONPATH if available, otherwise loads
target/release/libmixdyn.so directly.
"""

import importlib.machinery
import importlib.util
import math
import pathlib
import sys


def load():
    try:
        import mixdyn

        return mixdyn
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent
    for name in ("libmixdyn.so", "libmixdyn.dylib", "mixdyn.dll"):
        path = root / "target" / "release" / name
        if path.exists():
            loader = importlib.machinery.ExtensionFileLoader("mixdyn", str(path))
            spec = importlib.util.spec_from_file_location("mixdyn", path, loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            return module
    sys.exit("mixdyn extension not found; build it with "
             "`cargo build --release -p mixdyn-py --features extension-module`")


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    m = load()

    close(m.mixup_ce_lower_bound(10), 0.45, 1e-15)
    close(m.expected_pair_entropy(1.0), 0.5, 1e-10)
    close(m.identity_mixup_loss(10, pairs=20000, seed=1), 0.45, 0.01)

    law = m.MpLaw(0.25)
    close(law.total_mass(), 1.0, 1e-8)
    lo, hi = law.edges()
    close(lo, 0.25, 1e-15)
    close(hi, 2.25, 1e-15)
    close(law.cdf(law.quantile(0.3)), 0.3, 1e-9)

    step = m.Conditional.piecewise_region(2, [1.0], [0, 1])
    report = step.noise_lower_bound([0.0], [2.0], 0.6)
    assert report["case"] == "cross_pair", report
    frac = step.noisy_fraction([[0.0], [0.5], [1.5], [2.0]], 0.5)
    assert 0.0 <= frac["fraction"] <= 1.0, frac

    phi = [[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]
    y = [1.0, 2.0, 0.5]
    theta = m.closed_form_theta(phi, y, [0.0, 0.0, 0.0], [0.0, 0.0], 1.0, 1e3)
    limit = m.pseudo_inverse_apply(phi, y)
    for a, b in zip(theta, limit):
        close(a, b, 1e-10)

    traj = m.run_experiment("mixup_fixed", lam=0.5, epochs=200, test_size=200, seed=0)
    assert len(traj) == 200 and all(math.isfinite(v) for v in traj.test_risk)
    assert 0 <= traj.turning_epoch() < 200

    study = m.flow_study(theta0_draws=4, mc_samples=500, grid_points=16)
    assert len(study.t) == 16 and study.c1 > 0.0

    try:
        m.MpLaw(-1.0)
    except m.MixdynError:
        pass
    else:
        raise AssertionError("negative gamma accepted")

    print("mixdyn python smoke test: ok")


if __name__ == "__main__":
    main()
