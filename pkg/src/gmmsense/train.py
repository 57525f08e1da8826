"""Model initialization and training loops for the experiment harness.

Natural-image models start from patches grouped by dominant gradient
orientation (one flat class plus evenly spaced orientation bins), then
refine with the reconstruction/moment-update loop. Training can co-adapt
the sensing matrix and the model by redesigning the rows between
iterations.
"""

from __future__ import annotations

import numpy as np

from .design import SensingMatrix, random_orthonormal, rip_ab
from .inference import map_em
from .model import GaussianComponent, GmmModel, SignalBatch, m_step_update

__all__ = [
    "orientation_labels",
    "init_gmm_by_orientation",
    "regularize_model",
    "train_gmm",
    "train_gmm_coadapt",
    "supervised_gmm",
]


def regularize_model(model: GmmModel, batch: SignalBatch, rel: float) -> GmmModel:
    """Add a diagonal load to every component covariance.

    The load is rel times the mean per-sample energy of the batch, shared
    across components so sparse classes get a meaningful floor. Empirical
    patch models are near-singular, which destabilizes log-determinant
    criteria; a small shared load keeps every class full rank.
    """
    if rel <= 0.0:
        return model
    energy = float(np.mean(np.sum(batch.signals**2, axis=1)) / batch.dimension)
    load = rel * max(energy, 1e-300)
    eye = np.eye(model.dimension)
    comps = tuple(
        GaussianComponent.from_moments(c.mean, c.covariance + load * eye, c.prior)
        for c in model.components
    )
    return GmmModel(components=comps)


def orientation_labels(batch: SignalBatch, orientation_bins: int = 18) -> np.ndarray:
    """Assign each square patch to a gradient-orientation bin.

    Label 1 is the flat class (negligible gradient energy); labels
    2..orientation_bins+1 split [0, pi) evenly by the structure-tensor
    orientation of the patch.
    """
    n = batch.dimension
    p = int(round(np.sqrt(n)))
    if p * p != n:
        raise ValueError("orientation grouping requires square patches")
    imgs = batch.signals.reshape(-1, p, p)
    gy, gx = np.gradient(imgs, axis=(1, 2))
    sxx = np.sum(gx * gx, axis=(1, 2))
    syy = np.sum(gy * gy, axis=(1, 2))
    sxy = np.sum(gx * gy, axis=(1, 2))
    energy = sxx + syy
    theta = 0.5 * np.arctan2(2.0 * sxy, sxx - syy)  # in (-pi/2, pi/2]
    theta = np.mod(theta, np.pi)
    bins = np.minimum(
        (theta / np.pi * orientation_bins).astype(int), orientation_bins - 1
    )
    labels = bins + 2
    flat = energy <= 1e-3 * max(float(energy.mean()), 1e-300)
    labels[flat] = 1
    return labels


def _global_component(batch: SignalBatch, prior: float) -> GaussianComponent:
    mean = batch.signals.mean(axis=0)
    centered = batch.signals - mean
    cov = centered.T @ centered / batch.n_signals
    return GaussianComponent.from_moments(mean, 0.5 * (cov + cov.T), prior)


def init_gmm_by_orientation(
    batch: SignalBatch, orientation_bins: int = 18
) -> GmmModel:
    """Initial patch model: flat class + orientation bins, moment-fitted.

    Bins with fewer than two patches fall back to the global batch moments
    (with their empirical prior), keeping every component well defined.
    """
    labels = orientation_labels(batch, orientation_bins)
    g_total = orientation_bins + 1
    fallback = _global_component(batch, 1.0 / g_total)
    placeholder = GmmModel(
        components=tuple(fallback.with_prior(1.0 / g_total) for _ in range(g_total))
    )
    return m_step_update(batch.signals, labels, placeholder)


def train_gmm(
    batch: SignalBatch,
    orientation_bins: int = 18,
    iters: int = 2,
    sigma2: float | None = None,
    regularization: float = 1e-3,
) -> GmmModel:
    """Fit a patch model on raw signals: orientation init + EM refinement.

    The refinement runs the reconstruction/moment loop with identity
    sensing. sigma2 regularizes the model-selection objective; by default
    it is scaled to a small fraction of the mean per-sample signal energy
    (with exact full observations the selection objective needs a positive
    noise level to discriminate). The returned covariances carry a shared
    diagonal load of `regularization` times the mean per-sample energy.
    """
    model = init_gmm_by_orientation(batch, orientation_bins)
    if iters >= 1:
        if sigma2 is None:
            energy = float(
                np.mean(np.sum(batch.signals**2, axis=1)) / batch.dimension
            )
            sigma2 = max(1e-4 * energy, 1e-12)
        identity = SensingMatrix(rows=np.eye(batch.dimension))
        model = map_em(batch.signals, identity, model, sigma2, kappa=iters)
    return regularize_model(model, batch, regularization)


def train_gmm_coadapt(
    batch: SignalBatch,
    method: str,
    m: int,
    orientation_bins: int = 18,
    iters: int = 11,
    sigma2: float = 0.0,
    seed: int = 0,
) -> GmmModel:
    """Co-adapt the sensing rows and the model from compressed measurements.

    Each iteration designs m rows for the current model (random rows are
    drawn once and kept fixed), measures the training signals, and runs one
    reconstruction/moment-update pass. This is the offline training used
    before batch evaluation, where the sensing matrix depends on the model
    being learned.
    """
    if method not in ("random", "rip_ab"):
        raise ValueError(f"co-adaptation supports random or rip_ab, got {method!r}")
    model = init_gmm_by_orientation(batch, orientation_bins)
    rng = np.random.default_rng([seed, 404])
    random_rows = random_orthonormal(m, batch.dimension, seed=[seed, 405]).rows
    for _ in range(iters):
        rows = random_rows if method == "random" else rip_ab(model, m).rows
        y = batch.signals @ rows.T
        if sigma2 > 0.0:
            y = y + np.sqrt(sigma2) * rng.standard_normal(y.shape)
        model = map_em(y, rows, model, sigma2, kappa=1)
    return model


def supervised_gmm(batch: SignalBatch) -> GmmModel:
    """Moment-fit one component per label of a labeled batch."""
    if batch.labels is None:
        raise ValueError("supervised fitting requires a labeled batch")
    g_total = int(batch.labels.max())
    fallback = _global_component(batch, 1.0 / g_total)
    placeholder = GmmModel(
        components=tuple(fallback.with_prior(1.0 / g_total) for _ in range(g_total))
    )
    return m_step_update(batch.signals, batch.labels, placeholder)
