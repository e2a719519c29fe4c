"""Time-periodic forced Navier-Stokes on the torus: spectral tools, critical norms and a growth experiment."""

__version__ = "0.1.0"
