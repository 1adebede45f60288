"""Import the compiled extension and run a short design pass.

Build first:
    cargo build --release -p tcpaqm-py --features extension-module
then run this script from the repository root.
"""

import importlib.util
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    lib = ROOT / "target" / "release" / "libtcpaqm_py.so"
    if not lib.exists():
        sys.exit(f"missing {lib}; build with --features extension-module first")
    tmp = pathlib.Path(tempfile.mkdtemp())
    dst = tmp / "tcpaqm_py.so"
    shutil.copy(lib, dst)
    spec = importlib.util.spec_from_file_location("tcpaqm_py", dst)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main():
    t = load()
    params = t.NetworkParams()
    eq = t.equilibrium(params)
    print(f"R0={eq.r0:.4f} s  W0={eq.w0:.2f} pkts  p0={eq.p0:.5f}")
    assert abs(eq.r0 - 0.24667) < 1e-4

    poly = t.build_polytope(params, 0.1, 0.4)
    gain, margins = t.iod_synthesize_robust(poly)
    print(f"robust gain={gain}  min vertex margin={min(margins):.3e}")
    assert len(margins) == 8 and min(margins) > 0

    h_m = t.dd_max_delay(poly.vertices, [-0.589e-3, 0.0244e-3], 1)
    print(f"delay-dependent bound for the published gain: {h_m}")

    try:
        t.iod_analysis([t.linearize(params, eq)], [0.5, 0.5])
    except t.NoCertificateError as e:
        print(f"rejected as expected: {e}")
    else:
        raise AssertionError("positive gain should not certify")

    run = t.simulate(params, [-0.589e-3, 0.0244e-3], "fig1", horizon=30.0)
    print(f"fig1 settling={run['settling']} overshoot={run['overshoot']:.3f}")
    assert run["settling"] is not None
    print("smoke test passed")


if __name__ == "__main__":
    main()
