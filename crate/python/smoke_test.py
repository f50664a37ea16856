"""Smoke test for the Python extension.

Builds the extension with cargo, loads it from a temporary directory and
exercises generation, a short run and evaluation. Run with
`python3 python/smoke_test.py` or under pytest.
"""

import importlib.util
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load_extension(tmp):
    subprocess.run(
        ["cargo", "build", "--release", "-p", "panoslam-python", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    suffix = {"darwin": "dylib", "win32": "dll"}.get(sys.platform, "so")
    prefix = "" if sys.platform == "win32" else "lib"
    built = ROOT / "target" / "release" / f"{prefix}panoslam_py.{suffix}"
    target = pathlib.Path(tmp) / ("panoslam.pyd" if sys.platform == "win32" else "panoslam.so")
    shutil.copy(built, target)
    spec = importlib.util.spec_from_file_location("panoslam", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def test_smoke():
    with tempfile.TemporaryDirectory() as tmp:
        ps = load_extension(tmp)

        u, v = ps.project(512, 256, (1.0, 2.0, 5.0))
        b = ps.bearing(512, 256, (u, v))
        norm = math.sqrt(1 + 4 + 25)
        assert all(abs(x - y / norm) < 1e-9 for x, y in zip(b, (1.0, 2.0, 5.0)))

        data = pathlib.Path(tmp) / "straight"
        frames, length = ps.generate(str(data), scenario="straight_500m", seed=3)
        assert frames > 0 and abs(length - 500.0) < 1.0

        gt = str(data / "groundtruth.txt")
        same = ps.evaluate_files(gt, gt)
        assert same["ate"] < 1e-9

        result = ps.run(str(data), densify="interp", out=str(pathlib.Path(tmp) / "run"))
        assert len(result["positions"]) == frames
        assert 0.9 < result["similarity_scale"] < 1.1
        assert (pathlib.Path(tmp) / "run" / "trajectory.txt").exists()

        try:
            ps.generate(str(data), scenario="moon")
        except ValueError as e:
            assert "moon" in str(e)
        else:
            raise AssertionError("unknown scenario accepted")
        try:
            ps.evaluate_files(str(data / "missing.txt"), gt)
        except OSError as e:
            assert "missing.txt" in str(e)
        else:
            raise AssertionError("missing file accepted")
        assert issubclass(ps.TrackingLost, RuntimeError)


if __name__ == "__main__":
    test_smoke()
    print("python smoke test passed")
