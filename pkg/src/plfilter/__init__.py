"""Rational density surrogates from power and generalized logarithmic moments."""
