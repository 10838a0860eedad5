"""Pin BLAS to one thread before numpy loads anywhere in the test run.

The dense-performance criterion is a single-core budget; without this the
measurement depends on however many cores the BLAS pool happens to grab.
pytest imports conftest before any test module, so setting the environment
here is early enough.
"""
import os

for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")
