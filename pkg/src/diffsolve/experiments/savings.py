"""Iteration-savings decomposition against a converged-mode baseline.

Total savings compare cumulative inner iterations; the incomplete-
convergence share is what stopping below the convergence budget buys on
its own, and the progressive-refinement share is the remainder, so the
two components add up to the total exactly.
"""


def compute_savings(prdp_summary, baseline_summary):
    """Percent savings (pr, ic, total) of a run against its baseline.

    Both arguments are run summaries with ``total_iterations``,
    ``K_final`` and ``K_cap`` entries; the baseline must have run at
    the convergence budget throughout.
    """
    cum_b = baseline_summary["total_iterations"]
    cum_p = prdp_summary["total_iterations"]
    if cum_b <= 0:
        raise ValueError("baseline run performed no iterations")
    if baseline_summary["K_final"] != baseline_summary["K_cap"]:
        raise ValueError("baseline summary does not come from a converged-mode run")
    total = 1.0 - cum_p / cum_b
    ic = 1.0 - prdp_summary["K_final"] / prdp_summary["K_cap"]
    pr = total - ic
    return 100.0 * pr, 100.0 * ic, 100.0 * total
