"""Model-based clustering of repeatedly observed marked event sequences.

Accounts are observed over one or more slots (days); each observation is a
finite sequence of timestamped, typed events on a window [0, T].  The
package models each account's per-type log-intensity as a latent Gaussian
process drawn from one of C clusters (a mixture of log-Gaussian Cox
processes), optionally decomposed into account-, slot- and cell-level
random functions when slots repeat, and recovers the clusters with a
semi-parametric expectation-solution procedure built on kernel-smoothed
moment statistics, Karhunen-Loeve path sampling and Monte-Carlo
likelihood evaluation.

Main entry points: :func:`coxmix.esfit.fit` for single-slot data,
:func:`coxmix.multilevel.fit_multilevel` for repeated slots,
:mod:`coxmix.simulate` for synthetic data with known labels and the
``coxmix`` command line for end-to-end runs.
"""

__version__ = "0.1.0"
