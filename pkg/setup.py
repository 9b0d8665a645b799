from setuptools import Extension, setup
from Cython.Build import cythonize

ext_modules = cythonize(
    [Extension("lbr_kit.kernels._core", ["src/lbr_kit/kernels/_core.pyx"])],
    compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
)

setup(ext_modules=ext_modules)
