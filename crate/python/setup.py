"""Builds the compiled extension by delegating to cargo.

The extension crate lives in the sibling cargo workspace; this shim runs a
release build and copies the produced library to wherever setuptools wants
the extension to land, which covers both regular and editable installs.
"""

import shutil
import subprocess
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

REPO_ROOT = Path(__file__).resolve().parent.parent


class CargoExtension(Extension):
    def __init__(self, name: str, crate: str):
        super().__init__(name, sources=[])
        self.crate = crate


class CargoBuildExt(build_ext):
    def build_extension(self, ext):
        if not isinstance(ext, CargoExtension):
            return super().build_extension(ext)
        subprocess.run(
            ["cargo", "build", "--release", "--package", ext.crate],
            cwd=REPO_ROOT,
            check=True,
        )
        stem = ext.name.rsplit(".", 1)[-1]
        release = REPO_ROOT / "target" / "release"
        for candidate in (f"lib{stem}.so", f"lib{stem}.dylib", f"{stem}.dll"):
            built = release / candidate
            if built.exists():
                break
        else:
            raise FileNotFoundError(f"cargo produced no library named after {stem}")
        dest = Path(self.get_ext_fullpath(ext.name))
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(built, dest)


setup(
    ext_modules=[CargoExtension("obata._obata", crate="obata-py")],
    cmdclass={"build_ext": CargoBuildExt},
)
