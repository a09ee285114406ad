"""Backend selection: compiled kernels when available, NumPy otherwise.

Set CAPFLOW_FORCE_PY=1 to skip the extension (used by the parity tests and
the benchmark).  Selection is per function: the curvature triple sum is
faster through BLAS matmuls than through the compiled scalar loop, so it
stays on the NumPy implementation even when the extension is present (see
benchmarks/bench_kernels.py).
"""
import os

from . import _kernels_py

if os.environ.get("CAPFLOW_FORCE_PY") == "1":
    _impl = _kernels_py
else:
    try:
        from . import _kernels_c as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND
FAR_FIELD_SIDES = _impl.FAR_FIELD_SIDES

cell_transform = _impl.cell_transform
cell_matrix = _impl.cell_matrix
cell_apply = _impl.cell_apply
segment_transform = _impl.segment_transform

menger_c2 = _kernels_py.menger_c2
menger_c2_pointwise = _kernels_py.menger_c2_pointwise
