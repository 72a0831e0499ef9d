"""Build the extension, import it and run a tiny solve."""
import importlib
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    subprocess.run(["cargo", "build", "--release", "-p", "branchlab-py"], cwd=ROOT, check=True)
    lib = ROOT / "target" / "release" / "libbranchlab_py.so"
    tmp = pathlib.Path(tempfile.mkdtemp())
    shutil.copy(lib, tmp / "branchlab_py.so")
    sys.path.insert(0, str(tmp))
    return importlib.import_module("branchlab_py")


def main():
    bl = load()
    text = bl.generate_instance("mk", seed=3, params="12,2")
    sb = bl.solve(text, policy="sb")
    rnd = bl.solve(text, policy="random", seed=1)
    assert sb["status"] == "optimal", sb
    assert abs(sb["objective"] - rnd["objective"]) < 1e-6, (sb, rnd)
    probs, back = bl.hl_gauss_roundtrip(-100.0)
    assert abs(sum(probs) - 1.0) < 1e-9 and back < 0
    print(f"ok: objective {sb['objective']:.3f}, sb {sb['nodes']} nodes, random {rnd['nodes']} nodes")


if __name__ == "__main__":
    main()
