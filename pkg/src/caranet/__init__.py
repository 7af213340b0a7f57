"""CaraNet on a small float64 numpy autograd core."""

from .model import CaraNet, ModelConfig, ModelOutput
from .tensor import Tensor

__all__ = ["CaraNet", "ModelConfig", "ModelOutput", "Tensor"]
__version__ = "0.1.0"
