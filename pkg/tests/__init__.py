"""
Test suite for entangleometer
"""
