import numpy as np
from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; the fallback kernel is used
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("hslab._angular", ["src/hslab/_angular.pyx"],
                   include_dirs=[np.get_include()],
                   extra_compile_args=["-O3"])],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
