"""Smoke test for the `adapted_ot` Python extension.

Builds the extension with cargo (unless ADAPTED_OT_LIB points at an already
built shared library), imports it and runs a few quick checks.

    python3 python/smoke_test.py
"""

import importlib.util
import os
import shutil
import subprocess
import sys
import sysconfig
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build_library():
    lib = os.environ.get("ADAPTED_OT_LIB")
    if lib:
        return Path(lib)
    subprocess.run(
        ["cargo", "build", "--release", "-p", "adapted-ot-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    suffix = {"darwin": "dylib", "win32": "dll"}.get(sys.platform, "so")
    prefix = "" if sys.platform == "win32" else "lib"
    return ROOT / "target" / "release" / f"{prefix}adapted_ot_py.{suffix}"


def load(lib):
    ext = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    target = Path(tempfile.mkdtemp()) / f"adapted_ot{ext}"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("adapted_ot", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    ao = load(build_library())

    lx = ao.Lattice.build("kind=ou,theta=1", "1", n_steps=6)
    ly = ao.Lattice.build("0", "0.5", n_steps=6)
    assert lx.fosd_certified() and ly.fosd_certified()
    same = ao.aw_distance(lx, ao.Lattice.from_json(lx.to_json()), 2.0, True)
    assert same == 0.0, same
    d = ao.aw_distance(lx, ly, 2.0, True)
    assert abs(d - ao.kr_cost(lx, ly, 2.0, True)) < 1e-9
    print(f"lattice AW^2 (scaled, N=6): {d:.6f}")

    m = ao.metrics([[0.5, 1.0], [-0.5, -1.0]], [[0.0, 1.0], [0.0, -1.0]], 2.0)
    assert abs(m["adapted"] - 2.25) < 1e-10 and abs(m["wasserstein"] - 0.25) < 1e-10
    print(f"two-point trees: AW^2 {m['adapted']:.4f}, W^2 {m['wasserstein']:.4f}")

    est, se = ao.sync_distance("ou-vol", n_steps=32, samples=4000, seed=1)
    target = ao.closed_form("ou-vol")
    assert abs(est - target) < 5 * se + 0.01, (est, se, target)
    print(f"ou-vol synchronous cost {est:.4f} +- {se:.4f} (closed form {target:.4f})")

    (s, _), (a, a_se) = ao.counterexample(samples=4000, n_steps=50)
    assert a < s
    print(f"sign-switch drift: sync {s:.3f}, async {a:.3f} +- {a_se:.3f}")

    for cid, name, passed, detail in ao.selftest(quick=True, only=[1, 3, 4]):
        print(f"[{'PASS' if passed else 'FAIL'}] {cid} {name}: {detail}")
        assert passed

    print("smoke test passed")


if __name__ == "__main__":
    main()
