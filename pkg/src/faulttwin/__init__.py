"""Fault-diagnosis digital twin toolkit for grid-forming inverters.

Synthetic VSG fault data, histogram GBDT with a multi-class focal loss,
Bayesian search under ASHA early stopping, feature dropping and exact
interventional SHAP.
"""

from .dataset import CLASS_NAMES, N_CLASSES, Dataset, concat, split
from .errors import FaultTwinError

__version__ = "0.1.0"

__all__ = ["CLASS_NAMES", "N_CLASSES", "Dataset", "FaultTwinError", "concat", "split", "__version__"]
