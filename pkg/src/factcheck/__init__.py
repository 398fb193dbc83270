"""Online reliability estimation for binary fact-checking agents."""

__version__ = "0.1.0"
