from setuptools import Extension, setup

# The compiled kernels are an optional speedup: if Cython or a C compiler is
# missing, the install falls back to the pure-numpy kernels at import time.
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "stylemerge.numerics._kernels",
                ["src/stylemerge/numerics/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
