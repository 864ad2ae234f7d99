"""Birth-death processes on the integers in a site-random environment.

The process moves up by 1 and down by at most L, with exponential holding
times whose rates are drawn independently per site from a finite-support
law.  The package provides:

* :mod:`bdre.environment`: environment laws, reproducible realizations,
  and hypothesis checks on the law.
* :mod:`bdre.matrices`: recurrence transfer matrices, top Lyapunov
  exponent estimation, and the transience/recurrence classifier.
* :mod:`bdre.simulate`: continuous-time trajectories, the embedded jump
  chain, first passage times, and crossing counts.
* :mod:`bdre.branching`: the multitype branching process equivalent to
  the crossing counts, and passage-time reconstruction from it.
* :mod:`bdre.analysis`: quenched/annealed mean passage times, the law of
  large numbers velocity, and Monte Carlo verification reports.
* :mod:`bdre.cli`: a config-driven command line front end.
"""

__version__ = "0.1.0"
