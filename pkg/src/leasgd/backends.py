"""Backend selection for the numeric kernels.

The environment variable ``LEASGD_BACKEND`` picks the implementation:

* ``numba`` -- require the JIT kernels (ImportError if numba is missing),
* ``numpy`` -- force the pure-numpy fallback,
* unset / ``auto`` -- numba when importable, numpy otherwise.

Within one backend every run is bit-reproducible; across backends results
agree to floating-point rounding only (see benchmarks/bench_backends.py).
"""

import os

_KERNEL_NAMES = (
    "quad_loss",
    "quad_grad",
    "logistic_loss",
    "logistic_grad",
    "mlp_loss_grad",
    "mix_states",
    "mean_sq_dist",
)

_choice = os.environ.get("LEASGD_BACKEND", "auto").lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"LEASGD_BACKEND must be 'numba', 'numpy' or 'auto', got {_choice!r}"
    )

if _choice == "numpy":
    from . import _kernels_numpy as _impl

    BACKEND = "numpy"
elif _choice == "numba":
    from . import _kernels_numba as _impl

    BACKEND = "numba"
else:
    try:
        from . import _kernels_numba as _impl

        BACKEND = "numba"
    except ImportError:
        from . import _kernels_numpy as _impl

        BACKEND = "numpy"

quad_loss = _impl.quad_loss
quad_grad = _impl.quad_grad
logistic_loss = _impl.logistic_loss
logistic_grad = _impl.logistic_grad
mlp_loss_grad = _impl.mlp_loss_grad
mix_states = _impl.mix_states
mean_sq_dist = _impl.mean_sq_dist


def get_backend():
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return BACKEND


def load_backend(name):
    """Return the kernel module for ``name`` regardless of the active choice."""
    if name == "numpy":
        from . import _kernels_numpy

        return _kernels_numpy
    if name == "numba":
        from . import _kernels_numba

        return _kernels_numba
    raise ValueError(f"unknown backend {name!r}")
