"""
Finite-Speed Consensus Engine

Hegselmann-Krause opinion dynamics where influence travels at a finite
speed c, so every agent reacts to the others' retarded positions:
- Delay solver for the state-dependent retarded times
- Euler and Heun steppers over piecewise-linear histories
- Windowed Picard reference solver
- Invariant audits and the exponential-decay certificate

Driven from the command line with TOML/JSON run configurations.
"""

__version__ = "0.1.0"
