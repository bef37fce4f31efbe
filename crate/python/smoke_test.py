"""Smoke test for the catzeno_py extension.

Build first:
    cargo build --release -p catzeno-py --features extension-module
then run:
    python3 python/smoke_test.py
"""

import cmath
import importlib.machinery
import importlib.util
import math
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import catzeno_py

        return catzeno_py
    except ImportError:
        pass
    for profile in ("release", "debug"):
        for name in ("libcatzeno_py.so", "libcatzeno_py.dylib", "catzeno_py.dll"):
            path = ROOT / "target" / profile / name
            if path.exists():
                loader = importlib.machinery.ExtensionFileLoader("catzeno_py", str(path))
                spec = importlib.util.spec_from_file_location("catzeno_py", path, loader=loader)
                mod = importlib.util.module_from_spec(spec)
                loader.exec_module(mod)
                return mod
    sys.exit("catzeno_py not built; see the docstring")


def main():
    cz = load()
    print("catzeno_py", cz.__version__)

    assert abs(cz.rad_per_us_to_mhz(cz.mhz_to_rad_per_us(0.176)) - 0.176) < 1e-15

    alpha = cz.Config.alpha(2.0)
    plus = cz.DensityMatrix.cat(alpha, 0.0, 20)
    minus = cz.DensityMatrix.cat(alpha, math.pi, 20)
    assert abs(plus.parity() - 1.0) < 1e-12
    assert abs(cz.wigner(minus, 0j) + 2.0 / math.pi) < 1e-10
    x, y, z, leak = cz.bloch_vector(plus, alpha)
    assert abs(z - 1.0) < 1e-10 and leak < 1e-10
    assert cz.phase_flip_leakage(cz.DensityMatrix.coherent(alpha, 20), alpha) < 1e-3

    cfg = cz.Config(overrides=["kappa1_MHz=0", "chi_SS_MHz=0", "dim_S=20"])
    model = cz.LindbladModel.reduced(cfg, 2.0)
    vac = cz.DensityMatrix.fock(0, 20)
    final = model.evolve(vac, [0.0, 10.0 / cfg.kappa2])[-1]
    dist = final.trace_distance(plus)
    print(f"vacuum -> C+ trace distance after 10/kappa2: {dist:.2e}")
    assert dist < 0.05

    cfg = cz.Config(overrides=["scenario.nbar_list=[2.0]", "drive_multipliers=[1.0]", "dim_S=16"])
    run = cz.run_parity_oscillation(cfg)[0]
    fit = cz.fit_decaying_cosine(run["times"], run["parity"])
    want = 2 * cfg.eps0 * abs(alpha)
    print(f"Omega = {fit['omega']:.5f} rad/us (2 eps |alpha| = {want:.5f})")
    assert abs(fit["omega"] / want - 1.0) < 0.1

    try:
        cz.Config(overrides=["kapa2_MHz=1"])
    except ValueError as e:
        assert "kappa2" in str(e)
    else:
        raise AssertionError("unknown key accepted")

    for name, passed, worst, tol in cz.validate():
        print(f"{'PASS' if passed else 'FAIL'} {name}: {worst:.2e} <= {tol:.0e}")
        assert passed

    print("smoke test passed")


if __name__ == "__main__":
    main()
