"""Progressive depth decoupling and modulating for depth completion, on numpy.

The package is organised by concern:

- :mod:`pddm.numerics`: float64 arrays with reverse-mode gradients, parameters,
  Adam and finite-difference checking
- :mod:`pddm.binning`: bin widths, centers, boundary categories, UD/SID baselines
- :mod:`pddm.bim`, :mod:`pddm.decoupling`, :mod:`pddm.modulating`: the network parts
- :mod:`pddm.model`: the assembled network, :mod:`pddm.losses`, :mod:`pddm.training`
- :mod:`pddm.data`: synthetic scenes, samplers, metrics and file formats
"""

from .model import DepthCompletionModel, ForwardResult, ModelConfig, StageOutput

__version__ = "0.1.0"

__all__ = ["DepthCompletionModel", "ModelConfig", "ForwardResult", "StageOutput"]
