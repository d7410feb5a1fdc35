"""Link-level simulation of symbol-level precoded multiuser MISO downlinks
with Gaussian, inner-pilot Gaussian and mixture-based soft demodulators."""

__version__ = "0.1.0"
