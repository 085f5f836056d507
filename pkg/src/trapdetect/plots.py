"""Optional SVG plots for the benchmark CSV outputs."""

from __future__ import annotations

from collections import defaultdict


def _axes(path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4.5))
    return plt, fig, ax


def plot_der_records(records, path) -> None:
    """DER against mean brightness, one line per estimator."""
    plt, fig, ax = _axes(path)
    by_est = defaultdict(list)
    for r in records:
        by_est[r.estimator].append((r.mu, r.der_mean, r.der_sd))
    for est, pts in sorted(by_est.items()):
        pts.sort()
        mu = [p[0] for p in pts]
        der = [p[1] for p in pts]
        sd = [p[2] for p in pts]
        ax.errorbar(mu, der, yerr=sd, marker="o", capsize=3, label=est)
    ax.set_xlabel("mean brightness (photoelectrons)")
    ax.set_ylabel("detection error rate")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_runtime_records(records, path) -> None:
    plt, fig, ax = _axes(path)
    by_est = defaultdict(list)
    for r in records:
        by_est[r.estimator].append((r.n_sites, r.runtime_mean_s, r.runtime_sd_s))
    for est, pts in sorted(by_est.items()):
        pts.sort()
        ax.errorbar(
            [p[0] for p in pts],
            [p[1] for p in pts],
            yerr=[p[2] for p in pts],
            marker="o",
            capsize=3,
            label=est,
        )
    ax.set_xlabel("number of sites")
    ax.set_ylabel("runtime (s)")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_tuning_records(records, path) -> None:
    """Two panels: DER against step count and against the final threshold."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    # records from the step sweep share the default threshold fraction
    base_frac = records[0].t_final_frac
    step_recs = sorted(
        (r for r in records if r.t_final_frac == base_frac),
        key=lambda r: r.n_steps,
    )
    seen = set()
    xs, ys, es = [], [], []
    for r in step_recs:
        if r.n_steps in seen:
            continue
        seen.add(r.n_steps)
        xs.append(r.n_steps)
        ys.append(r.der_mean)
        es.append(r.der_sd)
    ax1.errorbar(xs, ys, yerr=es, marker="o", capsize=3)
    ax1.set_xlabel("number of steps")
    ax1.set_ylabel("detection error rate")

    frac_recs = sorted(
        (r for r in records if r.t_final_frac is not None),
        key=lambda r: r.t_final_frac,
    )
    by_frac = defaultdict(list)
    for r in frac_recs:
        by_frac[r.t_final_frac].append(r)
    fracs = sorted(by_frac)
    ax2.errorbar(
        fracs,
        [by_frac[f][-1].der_mean for f in fracs],
        yerr=[by_frac[f][-1].der_sd for f in fracs],
        marker="o",
        capsize=3,
    )
    ax2.set_xlabel("final threshold (fraction of mean brightness)")
    ax2.set_ylabel("detection error rate")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
