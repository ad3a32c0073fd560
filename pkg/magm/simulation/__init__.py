"""
Synthetic ground-truth generation.
"""
