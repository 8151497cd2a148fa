import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

# -ffp-contract=off keeps the compiled kernel bit-compatible with the pure
# Python backend (no FMA contraction of a*b+c).
EXTENSIONS = [
    Extension(
        "deplocus._kernel",
        ["src/deplocus/_kernel.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(EXTENSIONS, compiler_directives={"language_level": "3"}),
)
