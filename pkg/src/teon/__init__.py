"""TEON: tensorized cross-layer gradient orthogonalization.

Stacks same-shaped layer gradients into an order-3 tensor, orthogonalizes a
chosen matricization (polar factor via exact SVD or Newton-Schulz schedules),
and folds the result back — the layer-wise Muon update is the K=1 special
case. Ships the norm-geometry toolkit behind the method (Muon/TEON norms and
duals, comparability checks, trust-region steepest-descent oracles,
convergence-bound evaluators) plus a deterministic desk-scale experiment
harness with synthetic tasks and CSV metrics.
"""

__version__ = "0.1.0"
