"""Kernel dispatch: compiled fast path when built, numpy reference otherwise.

Set HIERDRIVE_PURE_PY=1 to force the numpy reference even when the compiled
module is available (used by the benchmark and for debugging).
"""

import os

from . import ref

try:
    from . import _fastkern
except ImportError:
    _fastkern = None

HAS_FAST = _fastkern is not None
_use_fast = HAS_FAST and os.environ.get("HIERDRIVE_PURE_PY", "") != "1"
impl = _fastkern if _use_fast else ref
ACTIVE = "fastkern" if _use_fast else "ref"

sdpa_forward = impl.sdpa_forward
sdpa_backward = impl.sdpa_backward
layer_norm_forward = impl.layer_norm_forward
layer_norm_backward = impl.layer_norm_backward
gelu_forward = impl.gelu_forward
gelu_backward = impl.gelu_backward
obb_overlap_pairs = impl.obb_overlap_pairs
fill_oriented_boxes = impl.fill_oriented_boxes
