"""Active learning-to-rank with MC-dropout uncertainty for ordinal severity scoring.

The package trains a small dropout-equipped feedforward scorer with a
probabilistic pairwise ranking loss, estimates per-sample predictive
uncertainty with Monte-Carlo dropout, and runs an annotation loop that
keeps asking an oracle (simulated or human) to compare the most uncertain
samples.
"""

__version__ = "0.1.0"
