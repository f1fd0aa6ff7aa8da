"""Exceptions raised by the markovsa lab"""

from typing import Optional


class MarkovSAError(Exception):
    """Base class for every failure raised by markovsa"""


class NotIrreducible(MarkovSAError, ValueError):
    """Transition matrix is not irreducible and aperiodic"""


class SingularChain(MarkovSAError, ValueError):
    """Balance equations have a null space larger than one dimension"""


class SingularOperator(MarkovSAError, ValueError):
    """I - P + 1⊗π or the Lyapunov operator could not be inverted to tolerance"""


class DriftOverflow(MarkovSAError, OverflowError):
    """A drift function table is not finite in log space"""

    def __init__(self, state: int, message: Optional[str] = None):
        self.state = state
        super().__init__(message or f"drift function overflows at state {state}")


class InvalidExponent(MarkovSAError, ValueError):
    """Step-size exponent outside (1/2, 1]"""


class InvalidSchedule(MarkovSAError, ValueError):
    """Step-size gain or block length is not positive"""


class UnsupportedChain(MarkovSAError, TypeError):
    """Operation needs a finite chain"""


class BlockOutOfRange(MarkovSAError, IndexError):
    """Requested block is not covered by the trajectory"""


class UnstableAtInfinity(MarkovSAError):
    """The ODE@∞ flow grows on a probe direction"""


class NotHurwitz(MarkovSAError, ValueError):
    """Matrix has an eigenvalue with nonnegative real part"""


class DomainError(MarkovSAError, ValueError):
    """Argument outside the domain where a closed form is finite"""


class ConfigError(MarkovSAError, ValueError):
    """Experiment configuration could not be parsed or validated"""
