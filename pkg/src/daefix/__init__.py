"""Structural analysis and repair of DAE systems.

Signature-matrix analysis (offsets, structural index, degrees of freedom,
solution scheme), symbolic system Jacobians, and conversion of systems whose
Jacobian is identically singular into equivalent solvable ones.
"""

__version__ = "0.1.0"
