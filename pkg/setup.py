"""Build the optional Cython kernels; the package falls back to pure Python without them."""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "umforest._kernels._ckernels",
                ["src/umforest/_kernels/_ckernels.pyx"],
                language="c++",
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
