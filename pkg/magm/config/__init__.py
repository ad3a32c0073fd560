"""
Configuration module for magm settings.
"""
