"""Image quality and detection metrics on 8-bit grayscale frames (peak value 255)."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from scipy import signal
from sklearn import metrics as skm

from .errors import ParameterError

logger = logging.getLogger(__name__)

PEAK = 255.0
K1 = 0.01
K2 = 0.03
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def _pair(G, R):
    G = np.asarray(G, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    if G.shape != R.shape:
        raise ParameterError(f"image shapes differ: {G.shape} vs {R.shape}")
    return G, R


def psnr(G, R) -> float:
    """``10 log10(255^2 / MSE)`` in dB; ``inf`` when the images are identical."""
    G, R = _pair(G, R)
    mse = float(np.mean((G - R) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(PEAK ** 2 / mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Square Gaussian window normalized to unit sum."""
    w = signal.windows.gaussian(size, std=sigma)
    return np.outer(w, w) / w.sum() ** 2


def _local_stats(G: np.ndarray, R: np.ndarray, window: np.ndarray):
    def filt(x):
        return signal.convolve2d(x, window, mode="valid")

    mu1, mu2 = filt(G), filt(R)
    var1 = filt(G * G) - mu1 * mu1
    var2 = filt(R * R) - mu2 * mu2
    cov = filt(G * R) - mu1 * mu2
    return mu1, mu2, var1, var2, cov


def _components(G: np.ndarray, R: np.ndarray, window: np.ndarray):
    C1 = (K1 * PEAK) ** 2
    C2 = (K2 * PEAK) ** 2
    mu1, mu2, var1, var2, cov = _local_stats(G, R, window)
    luminance = (2 * mu1 * mu2 + C1) / (mu1 * mu1 + mu2 * mu2 + C1)
    contrast_structure = (2 * cov + C2) / (var1 + var2 + C2)
    return luminance, contrast_structure


def ssim_map(G, R, window_size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Local SSIM over every full position of the Gaussian window (valid region only).

    For an h x w image and an 11 x 11 window the map is (h - 10) x (w - 10).
    """
    G, R = _pair(G, R)
    if G.ndim != 2 or min(G.shape) < window_size:
        raise ParameterError(f"image {G.shape} is smaller than the {window_size}x{window_size} window")
    luminance, contrast_structure = _components(G, R, gaussian_window(window_size, sigma))
    return luminance * contrast_structure


def mssim(G, R, window_size: int = 11, sigma: float = 1.5) -> float:
    return float(np.mean(ssim_map(G, R, window_size, sigma)))


def msssim_min_size(window_size: int = 11, scales: int = 5) -> int:
    return window_size * 2 ** (scales - 1)


def _downsample(x: np.ndarray) -> np.ndarray:
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def msssim(G, R, window_size: int = 11, sigma: float = 1.5, scales: int = 5) -> float:
    """Multi-scale SSIM over dyadic 2x2-average downsamplings.

    Contrast-structure enters at every scale and luminance at the coarsest one,
    each raised to its scale weight. Negative per-scale means are clipped to 0.

    Raises:
        ParameterError: the shorter side is below ``window_size * 2**(scales - 1)``.
    """
    G, R = _pair(G, R)
    if scales != len(MSSSIM_WEIGHTS):
        raise ParameterError(f"only {len(MSSSIM_WEIGHTS)} scales are supported")
    min_side = msssim_min_size(window_size, scales)
    if G.ndim != 2 or min(G.shape) < min_side:
        raise ParameterError(
            f"image {G.shape} too small for {scales}-scale MSSSIM with a {window_size}x{window_size} "
            f"window; minimum size is {min_side}x{min_side}"
        )
    window = gaussian_window(window_size, sigma)
    value = 1.0
    for i, weight in enumerate(MSSSIM_WEIGHTS):
        luminance, contrast_structure = _components(G, R, window)
        value *= max(float(np.mean(contrast_structure)), 0.0) ** weight
        if i == scales - 1:
            value *= max(float(np.mean(luminance)), 0.0) ** weight
        else:
            G, R = _downsample(G), _downsample(R)
    return float(value)


@dataclass
class RocCurve:
    """ROC points at fixed thresholds, ordered by increasing threshold.

    The rule is strict (``|recovered| > t``), so at ``t = 0`` pixels with zero
    foreground count as negative and the first point need not be ``(1, 1)``.
    The all-positive corner is supplied by the anchor that ``auc`` adds.
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    degenerate: bool = False
    warnings: List[str] = field(default_factory=list)

    @property
    def points(self) -> List[tuple]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"threshold": self.thresholds, "fpr": self.fpr, "tpr": self.tpr})


def roc(gt_masks, recovered, n_thresh: int = 100) -> RocCurve:
    """Pixel-level ROC of ``|recovered| > t`` against binary ground truth.

    Thresholds are ``linspace(0, 255, n_thresh)``; counts are pooled over all
    pixels of all frames. When the ground truth holds a single class the
    undefined rate is NaN and the curve is flagged degenerate.
    """
    gt, rec = _pair(gt_masks, recovered)
    if not np.all((gt == 0) | (gt == 1)):
        raise ParameterError("ground-truth masks must be binary (0/1)")
    truth = gt.ravel().astype(int)
    magnitude = np.abs(rec.ravel())
    thresholds = np.linspace(0.0, PEAK, n_thresh)
    fpr = np.empty(n_thresh)
    tpr = np.empty(n_thresh)
    for i, t in enumerate(thresholds):
        tn, fp, fn, tp = skm.confusion_matrix(truth, (magnitude > t).astype(int), labels=[0, 1]).ravel()
        fpr[i] = fp / (fp + tn) if fp + tn > 0 else np.nan
        tpr[i] = tp / (tp + fn) if tp + fn > 0 else np.nan
    curve = RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr)
    positives = int(truth.sum())
    if positives == 0 or positives == truth.size:
        curve.degenerate = True
        message = "ground truth holds a single class; ROC rates are undefined"
        curve.warnings.append(message)
        logger.warning(message)
    return curve


def auc(curve: RocCurve) -> Optional[float]:
    """Trapezoidal area under the ROC points plus the anchors (0, 0) and (1, 1); None when degenerate."""
    if curve.degenerate:
        return None
    x = np.concatenate([[0.0], curve.fpr, [1.0]])
    y = np.concatenate([[0.0], curve.tpr, [1.0]])
    order = np.lexsort((y, x))
    return float(skm.auc(x[order], y[order]))


@dataclass
class MetricsReport:
    """Per-frame quality scores of one recovered sequence against its truth."""

    per_frame: pd.DataFrame
    roc: Optional[RocCurve] = None

    @property
    def auc(self) -> Optional[float]:
        return auc(self.roc) if self.roc is not None else None

    def aggregate(self) -> Dict[str, Optional[float]]:
        out: Dict[str, Optional[float]] = {}
        for column in ("psnr", "mssim", "msssim"):
            values = pd.to_numeric(self.per_frame[column], errors="coerce").dropna()
            out[column] = float(values.mean()) if len(values) else None
        out["auc"] = self.auc
        return out


def evaluate_frames(truth: List[np.ndarray], result: List[np.ndarray], window_size: int = 11) -> pd.DataFrame:
    """PSNR, MSSIM and MSSSIM for each frame pair; MSSSIM is None for frames below the minimum size."""
    if len(truth) != len(result):
        raise ParameterError(f"{len(truth)} truth frames but {len(result)} result frames")
    rows = []
    for j, (G, R) in enumerate(zip(truth, result)):
        small = min(G.shape) < msssim_min_size(window_size)
        rows.append({
            "frame": j,
            "psnr": psnr(G, R),
            "mssim": mssim(G, R, window_size),
            "msssim": None if small else msssim(G, R, window_size),
        })
    return pd.DataFrame(rows, columns=["frame", "psnr", "mssim", "msssim"])
