"""Two-stage Bayesian analysis of directed count networks.

Stage one fits an over-dispersed Poisson social relations model to transfer
counts; stage two regresses pairwise outcome similarity on the predicted
transfers from stage one.
"""

__version__ = "0.1.0"
