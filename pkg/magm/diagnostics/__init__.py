"""
Numerical checks of optimality and convexity conditions on small instances.
"""
