"""Simulation and analysis toolkit for a planar AC magnetic levitation trap.

Submodules:
    fields    coil geometry, instantaneous and amplitude field evaluation
    secular   analytic mode-frequency and stability predictions
    dynamics  rigid-body time-domain integration of the levitated magnet
    spectral  spectrum estimation, resonance fitting, mode tracking, ringdowns
    sweep     parameter sweep harness and figure-style study presets
    config    YAML run configuration
    cli       command-line front end
"""

__version__ = "0.1.0"
