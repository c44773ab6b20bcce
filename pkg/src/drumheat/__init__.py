"""Numerical laboratory for small-time heat content of isotropic stable
processes on fractal drums.

Subpackages:
    geometry  - drums, reference domains, membership/distance/volume queries
    simulate  - stable-increment Monte Carlo estimators
    analytic  - closed forms and quadrature oracles
    renewal   - renewal-equation solver and asymptotics
    harness   - experiment orchestration, records, fitting
    cli       - command-line front end
"""

__version__ = "0.1.0"
