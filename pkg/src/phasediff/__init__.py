"""Phase labelling of frame sequences by conditional label diffusion with temporal-logic priors."""

__version__ = "0.1.0"
