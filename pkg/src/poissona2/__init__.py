"""Numerical companion for the matrix A2 lower bound of the dyadic Hilbert transform.

Modules: :mod:`dyadic` (interval trees), :mod:`spd` (2x2 SPD algebra),
:mod:`weights` (A2 characteristics), :mod:`haar_shift` (the Haar-shift
form), :mod:`simplex_walk` (the lattice walk), :mod:`large_step` and
:mod:`small_step` (the two-stage construction), :mod:`cli`.
"""

__version__ = "0.1.0"
