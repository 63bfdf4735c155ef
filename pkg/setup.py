"""Build script: compiles the optional accelerator extension when Cython is
available.  The package installs and runs without it (a numpy fallback is
selected at import), so the extension is marked optional and a failed
compilation only degrades performance."""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext = Extension(
        "glmgof._kernels",
        sources=["src/glmgof/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    ext.optional = True
    ext_modules = cythonize([ext], language_level=3)
except ImportError:
    pass

setup(ext_modules=ext_modules)
