"""
magm main entry point.
"""

from magm.cli.main import main as cli_main


def main():
    """Run magm."""
    cli_main()


if __name__ == "__main__":
    main()
