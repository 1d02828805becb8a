"""
Entangleometer
Quantum-entanglement ellipsometer and classical PSA simulator with
retardance estimation and source characterization
"""

__version__ = "1.0.0"
