"""Modelling toolkit for a waveguide-coupled quantum-dot single-photon source.

Submodules: ``bloch`` (optical Bloch equations), ``device`` (beta factors and
pump impurity), ``photonstats`` (g2 / HOM algebra), ``montecarlo`` (quantum
jumps, click-stream synthesis and correlation), ``budget`` (efficiency ledger)
and ``cli``.
"""

__version__ = "0.1.0"
