"""
Expressibility of parameterized quantum circuits: ground-truth labels by
fidelity sampling against the Haar distribution, and a graph neural
network surrogate that predicts them from the circuit structure.
"""

__version__ = "0.1.0"
