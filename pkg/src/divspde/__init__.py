"""Numerical solver and verification harness for stochastic PDEs with monotone
drift in divergence form, du - div gamma(grad u) dt = B(t, u) dW."""

__version__ = "0.1.0"
