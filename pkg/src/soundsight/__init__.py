"""soundsight: desk-scale audio-visual masked token modeling.

Pipeline: trainable residual-VQ audio codec -> visually conditioned masked
token transformer -> iterative parallel decoding with classifier-free
guidance -> retrieval / classification adaptation, plus metrics and a CLI.
"""

from soundsight._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
