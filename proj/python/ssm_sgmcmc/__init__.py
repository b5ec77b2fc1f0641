"""Stochastic-gradient MCMC for hidden Markov and linear dynamical models.

Parameters travel as plain dicts in the same layout as the JSON parameter
files written by the command line tool.
"""

from ._core import (
    buffered_gradient,
    cmd_buffer,
    cmd_eval,
    cmd_fit,
    cmd_generate,
    cmd_grad_error,
    full_gradient,
    grad_error_curve,
    heldout_loglik,
    imq_kernel,
    init_params,
    ksd,
    marginal_loglik,
    nmi,
    param_mse,
    predictive_k_step,
    run_chain,
    simulate,
    synthetic_params,
)

__all__ = [
    "buffered_gradient",
    "cmd_buffer",
    "cmd_eval",
    "cmd_fit",
    "cmd_generate",
    "cmd_grad_error",
    "full_gradient",
    "grad_error_curve",
    "heldout_loglik",
    "imq_kernel",
    "init_params",
    "ksd",
    "marginal_loglik",
    "nmi",
    "param_mse",
    "predictive_k_step",
    "run_chain",
    "simulate",
    "synthetic_params",
]
