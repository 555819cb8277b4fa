"""Procurement-fraud auditing with from-scratch perceptrons.

Modules: ``core`` (math helpers), ``data`` (records and CSV), ``normalize``
(min-max scaling), ``mlp`` (network), ``train`` (cross-validation and
reports), ``synthgen`` (synthetic ledgers), ``cli``.
"""

__version__ = "0.1.0"
