"""Closed-loop grain-size control toolkit for a simulated three-stroke hot upsetting process.

Subpackages cover the physics oracle (procsim), training-data generation
(dataset), a small neural-network engine (neuro), the surrogate network
(surrogate), a generalized simulated-annealing minimizer (anneal) and the
shrinking-horizon controller (mpc).
"""

__version__ = "0.1.0"
