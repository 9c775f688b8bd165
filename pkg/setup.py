import os

from setuptools import setup

ext_modules = []
if os.environ.get("REGNL_NO_EXTENSION") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        compile_args = ["-O3"]
        if os.environ.get("REGNL_PORTABLE") != "1":
            compile_args.append("-march=native")
        extensions = [
            Extension(
                "regnl._kernels",
                ["src/regnl/_kernels.pyx"],
                include_dirs=[np.get_include(), "src/regnl"],
                extra_compile_args=compile_args,
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ]
        ext_modules = cythonize(extensions, compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
