"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a pure-Python evaluator is selected
at import time), so a failed compile only costs speed.
"""

import numpy as np
from setuptools import setup

PYX = "src/tampkit/nlp/kernels/_eval_cy.pyx"

try:
    import os

    from Cython.Build import cythonize

    if os.path.exists(PYX):
        ext_modules = cythonize(
            [PYX],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )
    else:
        ext_modules = []
except ImportError:
    ext_modules = []

setup(
    ext_modules=ext_modules,
    include_dirs=[np.get_include()],
)
