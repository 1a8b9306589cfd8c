"""Player-level tackle value from tracking data.

The pipeline estimates a conditional density of end-of-play field position
from frame-level tracking features, scores each tackle by how much expected
points the defender saved relative to a counterfactual without them, and
ranks tacklers with a skewed-t mixed model.
"""

__version__ = "0.1.0"
