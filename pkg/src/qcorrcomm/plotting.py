"""Report figures rendered to files with the non-interactive Agg backend."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps repeated renders byte-identical
_META = {"Software": None}


def _save(fig, path) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return str(path)


def plot_marginal_spectra(spectra, path, eps: float | None = None) -> str:
    """Bar chart per party of the marginal eigenvalues.

    With ``eps`` given, a dashed line marks the last index kept by the
    approximate-rank cutoff at ``(1 - eps)^2``.
    """
    k = len(spectra)
    fig, axes = plt.subplots(1, k, figsize=(3 * k, 2.8), squeeze=False)
    for j, (ax, lam) in enumerate(zip(axes[0], spectra)):
        lam = np.asarray(lam, dtype=float)
        ax.bar(np.arange(1, len(lam) + 1), lam, color="0.35")
        ax.set_title(f"party {j}")
        ax.set_xlabel("index")
        if j == 0:
            ax.set_ylabel("eigenvalue")
        ax.set_ylim(0, 1)
        if eps is not None:
            c = np.cumsum(lam)
            hit = np.nonzero(c >= (1 - eps) ** 2 - 1e-12)[0]
            cut = int(hit[0]) + 1 if hit.size else len(lam)
            ax.axvline(cut + 0.5, color="C3", ls="--", lw=1)
    return _save(fig, path)


def plot_fit_residuals(tried: dict[int, float], path, target: float | None = None) -> str:
    """Best fit residual against the factor size ``r`` on a log scale."""
    fig, ax = plt.subplots(figsize=(4, 3))
    if tried:
        rs = sorted(tried)
        ax.semilogy(rs, [max(tried[r], 1e-18) for r in rs], "o-", color="0.2")
        ax.set_xticks(rs)
    if target is not None:
        ax.axhline(target, color="C3", ls="--", lw=1, label="target")
        ax.legend(frameon=False)
    ax.set_xlabel("r")
    ax.set_ylabel("residual")
    return _save(fig, path)
