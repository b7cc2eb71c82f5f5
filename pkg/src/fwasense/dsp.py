"""CFR -> normalized angle-delay map preprocessing.

Four steps: 3D inverse DFT over the receive-antenna, transmit-antenna and
subcarrier axes; truncation to the first delay bins; log-magnitude
compression; reshape to a trailing channel axis plus per-sample min-max
normalization into [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_EPS = 1e-12  # guards log of exact zeros
NORM_EPS = 1e-12  # constant inputs normalize to all zeros


def idft3(h: np.ndarray) -> np.ndarray:
    """Separable inverse DFT along the first three axes with 1/(Nr Nt Nc)
    normalization: X[a,b,k] = (1/(Nr Nt Nc)) sum H[i,j,c]
    exp(+j2pi(ai/Nr + bj/Nt + ck/Nc))."""
    return np.fft.ifftn(np.asarray(h, dtype=np.complex128), axes=(0, 1, 2))


def truncate_delay(t: np.ndarray, n_keep: int) -> np.ndarray:
    """Keep the first ``n_keep`` bins of the delay (third) axis."""
    if not 1 <= n_keep <= t.shape[2]:
        raise ValueError(f"n_keep must be in [1, {t.shape[2]}], got {n_keep}")
    return t[:, :, :n_keep]


def log_amplitude(t: np.ndarray) -> np.ndarray:
    """Elementwise log10(|t| + eps); eps keeps exact zeros finite."""
    return np.log10(np.abs(t) + LOG_EPS)


def reshape_normalize(t: np.ndarray) -> np.ndarray:
    """Append a trailing channel axis and min-max normalize the whole
    tensor into [0, 1]; a constant tensor maps to all zeros."""
    t = np.asarray(t, dtype=np.float64)
    lo = t.min()
    hi = t.max()
    return ((t - lo) / (hi - lo + NORM_EPS))[..., None]


def preprocess(h: np.ndarray, n_keep: int) -> np.ndarray:
    """Full chain: idft3 -> truncate_delay -> log_amplitude ->
    reshape_normalize. Output shape [N_r, N_t, n_keep, 1] in [0, 1]."""
    return reshape_normalize(log_amplitude(truncate_delay(idft3(h), n_keep)))


@dataclass
class PreprocessedSplit:
    """One dataset split with every CFR already mapped to the angle-delay
    domain. ``maps`` is float32 [S, MN, N_r, N_t, N_c', 1]."""

    maps: np.ndarray
    scene_labels: np.ndarray  # uint8 [S]
    pair_labels: np.ndarray  # uint8 [S, MN]
    uav_positions: np.ndarray  # float64 [S, 3]; NaN rows when absent

    def __len__(self) -> int:
        return self.maps.shape[0]


def preprocess_dataset(path: str, n_keep: int) -> PreprocessedSplit:
    """Stream a dataset file into angle-delay maps (CFRs are not kept)."""
    from .channel import DatasetReader

    reader = DatasetReader(path)
    hdr = reader.header
    maps = np.empty(
        (hdr.n_samples, hdr.n_pairs, hdr.n_rx, hdr.n_tx, n_keep, 1), dtype=np.float32
    )
    scene = np.empty(hdr.n_samples, dtype=np.uint8)
    pair_bits = np.empty((hdr.n_samples, hdr.n_pairs), dtype=np.uint8)
    positions = np.full((hdr.n_samples, 3), np.nan)
    for i, rec in enumerate(reader):
        for e, cfr in enumerate(rec.cfrs):
            maps[i, e] = preprocess(cfr.data, n_keep).astype(np.float32)
        scene[i] = rec.scene_label
        pair_bits[i] = rec.pair_labels
        if rec.uav_position is not None:
            positions[i] = rec.uav_position
    reader.close()
    return PreprocessedSplit(
        maps=maps, scene_labels=scene, pair_labels=pair_bits, uav_positions=positions
    )
