"""Root-node cutting-plane engine for the capacitated vehicle routing problem.

The package separates rounded capacity inequalities (exactly via a MILP, or
heuristically through stochastic graph coarsening) and framed capacity
inequalities over the coarsening hierarchy, and drives them in a cutting-plane
loop over the two-index LP relaxation.
"""

__version__ = "0.1.0"
