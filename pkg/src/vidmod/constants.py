"""Numeric tolerances and epsilons used across the numerics code."""

LAYERNORM_EPS = 1e-5
ADAM_EPS = 1e-8

# Acceptance tolerances.
GRAD_CHECK_REL_TOL = 1e-4
PROB_SUM_TOL = 1e-9
METRIC_ORACLE_TOL = 1e-12
