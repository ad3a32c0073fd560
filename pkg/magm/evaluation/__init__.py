"""
Recovery and estimation quality metrics.
"""
