"""Simulation toolkit for programmable light curtain safety monitoring.

Modules: geom2d (planar geometry), layout (scenarios), instrument (sensor
placement), robotarm (kinematics), curtain (curtain profiles), plcsim
(simulated sensor), monitor (detection and stop pipeline), recon (sweep
reconstruction and registration) and cli.
"""
__version__ = "0.1.0"
