import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("ADPRIOR_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
        import numpy as np
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "adprior.kernels._ckernels",
                    ["src/adprior/kernels/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            language_level=3,
        )

setup(ext_modules=ext_modules)
