from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the pure-Python kernels take over at import
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "opasym._ckernels",
                ["src/opasym/_ckernels.pyx"],
                # no FMA contraction and no sin/cos fusion into sincos: keeps
                # results bit-identical to the Python twin
                extra_compile_args=["-O2", "-ffp-contract=off", "-fno-builtin-sin", "-fno-builtin-cos"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
