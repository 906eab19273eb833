"""CVaR-VQE for vehicular user association over mixed RF/THz base stations."""

__version__ = "0.1.0"
