"""Backend selection for the hot loops.

The compiled extension ``boilnet._ckernels`` is used when it was built;
otherwise the numpy fallback in ``boilnet._pykernels`` is used. Setting
``BOILNET_PURE_PYTHON=1`` forces the fallback.
"""

import os

from boilnet import _pykernels

python_kernels = _pykernels

if os.environ.get("BOILNET_PURE_PYTHON", "") not in ("", "0"):
    compiled_kernels = None
else:
    try:
        from boilnet import _ckernels as compiled_kernels
    except ImportError:  # extension not built
        compiled_kernels = None

active = compiled_kernels if compiled_kernels is not None else python_kernels
BACKEND = "compiled" if compiled_kernels is not None else "python"

block_mean = active.block_mean
bias_elu = active.bias_elu
adam_update = active.adam_update
