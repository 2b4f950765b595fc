"""Purchase prediction over dynamic interest-diffusion networks."""

__version__ = "0.1.0"
