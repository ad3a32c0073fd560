"""
Core module: logging and error types shared by every magm subpackage.
"""
