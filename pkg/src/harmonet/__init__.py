"""Potential theory on infinite weighted graphs.

Networks are neighbor oracles; finite windows are cut out of them for every
computation. Submodules:

network_core   networks, windows, boundaries
operators      Laplacian, Markov operator, energy, dissipation space
potential      Dirichlet problems, dipoles, monopoles, boundary sums
random_walk    Monte Carlo hitting and Green function estimators
bratteli       graded diagrams, level recursion, currents, energy bounds
transfer       transfer operators between levels
model_library  closed-form fixtures
cli            command line front end
"""

__version__ = "0.1.0"
