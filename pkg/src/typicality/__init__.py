"""Canonical typicality of an impurity in a Fermi-Hubbard bath, tuned by quantum chaos."""
__version__ = "0.1.0"
