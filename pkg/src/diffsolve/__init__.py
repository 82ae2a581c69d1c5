"""Differentiable iterative linear solvers inside PDE training loops.

The package is organised bottom-up:

``operators``
    Grid descriptions and matrix-free linear operators for the supported
    PDE discretizations.
``solvers``
    Iterative solvers (Jacobi, steepest descent, restarted GMRES) with a
    shared convergence/reporting contract, plus a dense direct solver.
``autodiff``
    Reverse-mode differentiation through the solvers, either by unrolling
    the iteration or through the implicit function theorem.
``networks``
    Small dense and convolutional networks on flat float32 parameter
    vectors with handwritten backward passes.
``training``
    Adam, learning-rate schedules, loss/validation helpers and the
    iteration accounting used by the experiment drivers.
``refinement``
    The plateau-driven controller that adapts solver iteration budgets
    during training.
``experiments``
    Scenario configuration, dataset generation, run orchestration,
    metrics persistence and the command line entry point.
"""

__version__ = "0.1.0"
