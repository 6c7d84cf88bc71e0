# IM-DCL — Source-Free Cross-Domain Few-Shot Adaptation
# Information maximization + distance-aware contrastive learning on episodic tasks

__version__ = "1.0.0"
