"""
TLID - Taylor's law for infinitely divisible families

Exponents, self-decomposability oracles and exact process simulators for
the TweBLE, negative binomial, compound Poisson-geometric, Polya-Aeppli
and gamma families.
"""

import logging

__version__ = "1.0.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())
