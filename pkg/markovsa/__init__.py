"""markovsa - stochastic approximation with Markovian noise, a numerical lab"""

__version__ = "0.1.0"
