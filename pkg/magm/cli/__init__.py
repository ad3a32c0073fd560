"""
CLI module for the magm command-line interface.
"""

from magm.cli.main import app, main
