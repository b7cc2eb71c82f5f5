"""Geometric multipath channel, CFR synthesis, labels, and dataset files.

The channel is a parametric single-bounce substitute for ray tracing: a
line-of-sight path per BS-CPE pair, one bounce per configured static
scatterer, and one bounce off the UAV when present. Segment losses are
free-space; bounces are additionally scaled by a reflection amplitude
coefficient from the scenario. Per-antenna structure is deferred to CFR
synthesis through stored departure/arrival angles.
"""

from __future__ import annotations

import enum
import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .scenario import (
    SPEED_OF_LIGHT,
    PairId,
    Scenario,
    look_at_frame,
    sample_uav_position,
)

# gains diverge as segment length -> 0; clamp below this distance
MIN_SEGMENT_M = 1.0


class PathKind(enum.Enum):
    LOS = "los"
    STATIC_BOUNCE = "static_bounce"
    UAV_BOUNCE = "uav_bounce"


@dataclass(frozen=True)
class Path:
    kind: PathKind
    delay_s: float
    gain: complex  # complex amplitude before array expansion
    aoa: tuple[float, float]  # (azimuth, elevation) at the BS, radians
    aod: tuple[float, float]  # (azimuth, elevation) at the CPE, radians


@dataclass
class PathSet:
    pair: PairId
    paths: list[Path]


@dataclass
class CfrTensor:
    pair: PairId
    data: np.ndarray  # complex, [N_r, N_t, N_c]


@dataclass
class SampleRecord:
    scene_label: int  # 1 iff a UAV is present
    uav_position: np.ndarray | None  # (3,) meters, None when absent
    pair_labels: np.ndarray  # uint8, length M*N, flat-index order
    cfrs: list[CfrTensor]  # length M*N, flat-index order


def _angles_in_frame(frame: np.ndarray, direction: np.ndarray) -> tuple[float, float]:
    """(azimuth, elevation) of a unit direction in a node's local frame."""
    d = frame @ direction
    az = float(np.arctan2(d[1], d[0]))
    el = float(np.arcsin(np.clip(d[2], -1.0, 1.0)))
    return az, el


def _unit(vec: np.ndarray) -> tuple[np.ndarray, float]:
    dist = float(np.linalg.norm(vec))
    if dist < 1e-12:
        return np.array([0.0, 0.0, 1.0]), 0.0
    return vec / dist, dist


def _free_space_amp(wavelength: float, dist: float) -> float:
    return wavelength / (4.0 * np.pi * max(dist, MIN_SEGMENT_M))


def trace_paths(s: Scenario, pair: PairId, uav: np.ndarray | None = None) -> PathSet:
    """Propagation paths for one pair: LoS, one bounce per scatterer, and a
    UAV bounce when a UAV position is given.

    Bounce amplitude is the product of the two segment free-space losses
    times the scenario's reflection coefficient; the carrier phase of the
    traveled distance is folded into the complex gain.
    """
    bs, cpe = s.pair_positions(pair)
    lam = s.wavelength
    bs_frame = look_at_frame(bs)
    cpe_frame = look_at_frame(cpe)
    paths: list[Path] = []

    def phase_of(dist: float) -> complex:
        return np.exp(-2j * np.pi * s.carrier_hz * dist / SPEED_OF_LIGHT)

    # LoS
    dir_bs_to_cpe, d_los = _unit(cpe - bs)
    paths.append(
        Path(
            kind=PathKind.LOS,
            delay_s=max(d_los, MIN_SEGMENT_M) / SPEED_OF_LIGHT,
            gain=_free_space_amp(lam, d_los) * phase_of(d_los),
            aoa=_angles_in_frame(bs_frame, dir_bs_to_cpe),
            aod=_angles_in_frame(cpe_frame, -dir_bs_to_cpe),
        )
    )

    def bounce(point: np.ndarray, kind: PathKind, reflect_amp: float) -> Path:
        dir_cpe_to_pt, d_tx = _unit(point - cpe)  # CPE -> bounce point
        dir_bs_to_pt, d_rx = _unit(point - bs)  # bounce point -> BS, seen from BS
        total = max(d_tx, MIN_SEGMENT_M) + max(d_rx, MIN_SEGMENT_M)
        amp = _free_space_amp(lam, d_tx) * _free_space_amp(lam, d_rx) * reflect_amp
        return Path(
            kind=kind,
            delay_s=total / SPEED_OF_LIGHT,
            gain=amp * phase_of(total),
            aoa=_angles_in_frame(bs_frame, dir_bs_to_pt),
            aod=_angles_in_frame(cpe_frame, dir_cpe_to_pt),
        )

    for sc in s.scatterer_positions:
        paths.append(
            bounce(np.asarray(sc, dtype=np.float64), PathKind.STATIC_BOUNCE, s.scatterer_reflect_amp)
        )
    if uav is not None:
        paths.append(
            bounce(np.asarray(uav, dtype=np.float64), PathKind.UAV_BOUNCE, s.uav_reflect_amp)
        )
    return PathSet(pair=pair, paths=paths)


def steering_vector(array_shape: tuple[int, int], az: float, el: float) -> np.ndarray:
    """Half-wavelength UPA steering vector for a direction in the local
    frame; elements flattened row-major over (rows, cols)."""
    rows, cols = array_shape
    dy = np.cos(el) * np.sin(az)  # along the columns axis
    dz = np.sin(el)  # along the rows axis
    col_phase = np.pi * dy * np.arange(cols)
    row_phase = np.pi * dz * np.arange(rows)
    return np.exp(1j * (row_phase[:, None] + col_phase[None, :])).reshape(-1)


def synthesize_cfr(
    s: Scenario, ps: PathSet, rng: np.random.Generator | None = None
) -> CfrTensor:
    """CFR over the OFDM grid: H[i,j,k] = sum_p gain_p a_rx_i a_tx_j
    exp(-j 2 pi f_k tau_p), with f_k = k * subcarrier spacing (the carrier
    phase already lives in each path gain).

    AWGN is added when the scenario sets ``noise_snr_db`` and an rng is
    supplied; SNR is relative to the mean signal power of this tensor.
    """
    n_r, n_t, n_c = s.n_rx, s.n_tx, s.n_subcarriers
    if not ps.paths:
        return CfrTensor(pair=ps.pair, data=np.zeros((n_r, n_t, n_c), dtype=np.complex128))
    freqs = s.subcarrier_spacing_hz * np.arange(n_c)
    a_rx = np.stack([steering_vector(s.rx_array, *p.aoa) for p in ps.paths])
    a_tx = np.stack([steering_vector(s.tx_array, *p.aod) for p in ps.paths])
    gains = np.array([p.gain for p in ps.paths], dtype=np.complex128)
    delays = np.array([p.delay_s for p in ps.paths])
    ramp = np.exp(-2j * np.pi * freqs[None, :] * delays[:, None])  # [P, N_c]
    h = np.einsum("p,pi,pj,pk->ijk", gains, a_rx, a_tx, ramp, optimize=True)
    if s.noise_snr_db is not None and rng is not None:
        sig_power = float(np.mean(np.abs(h) ** 2))
        if sig_power > 0:
            noise_std = np.sqrt(sig_power / 10.0 ** (s.noise_snr_db / 10.0) / 2.0)
            h = h + noise_std * (
                rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
            )
    return CfrTensor(pair=ps.pair, data=h)


def augment_phase(ps: PathSet, rng: np.random.Generator) -> PathSet:
    """Rotate each path gain by an independent U[0, 2pi) phase; delays,
    angles, and kinds are untouched."""
    rotated = []
    for p in ps.paths:
        theta = rng.uniform(0.0, 2.0 * np.pi)
        rotated.append(
            Path(kind=p.kind, delay_s=p.delay_s, gain=p.gain * np.exp(1j * theta), aoa=p.aoa, aod=p.aod)
        )
    return PathSet(pair=ps.pair, paths=rotated)


def pair_label(ps: PathSet, power_floor_db: float) -> int:
    """1 iff the set holds a UAV bounce within ``power_floor_db`` of the
    strongest path's power."""
    powers = np.array([abs(p.gain) ** 2 for p in ps.paths])
    if powers.size == 0:
        return 0
    strongest = float(powers.max())
    if strongest <= 0.0:
        return 0
    for p, power in zip(ps.paths, powers):
        if p.kind is PathKind.UAV_BOUNCE and power > 0:
            if 10.0 * np.log10(strongest / power) <= power_floor_db:
                return 1
    return 0


def scene_label(pair_labels: np.ndarray) -> int:
    """0 iff every pair label is 0, else 1 (logical OR)."""
    return int(np.any(np.asarray(pair_labels) != 0))


# ---------------------------------------------------------------------------
# Dataset file format
#
# Little-endian binary. Header: magic "FWAS", u16 version=1, u16 M, N, N_r,
# N_t, N_c, u32 sample count. Per sample: u8 scene label, 3 x f32 UAV
# position (NaN triple when absent), ceil(MN/8) bytes pair-label bitset
# (bit (flat-1) of byte (flat-1)//8, LSB first), then MN CFR blocks of
# N_r*N_t*N_c complex64 values, row-major [N_r][N_t][N_c].
# ---------------------------------------------------------------------------

DATASET_MAGIC = b"FWAS"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sHHHHHHI")


class DatasetError(ValueError):
    """Dataset file is malformed or inconsistent with expectations."""


@dataclass(frozen=True)
class DatasetHeader:
    n_bs: int
    n_cpe: int
    n_rx: int
    n_tx: int
    n_subcarriers: int
    n_samples: int

    @property
    def n_pairs(self) -> int:
        return self.n_bs * self.n_cpe

    @property
    def bitset_bytes(self) -> int:
        return (self.n_pairs + 7) // 8

    @property
    def cfr_values(self) -> int:
        return self.n_rx * self.n_tx * self.n_subcarriers

    @property
    def record_bytes(self) -> int:
        return 1 + 12 + self.bitset_bytes + self.n_pairs * self.cfr_values * 8


def _pack_bitset(bits: np.ndarray, nbytes: int) -> bytes:
    out = bytearray(nbytes)
    for i, b in enumerate(bits):
        if b:
            out[i // 8] |= 1 << (i % 8)
    return bytes(out)


def _unpack_bitset(raw: bytes, n: int) -> np.ndarray:
    bits = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        bits[i] = (raw[i // 8] >> (i % 8)) & 1
    return bits


def _record_bytes(rec: SampleRecord, hdr: DatasetHeader) -> bytes:
    parts = [struct.pack("<B", rec.scene_label)]
    if rec.uav_position is None:
        parts.append(np.full(3, np.nan, dtype="<f4").tobytes())
    else:
        parts.append(np.asarray(rec.uav_position, dtype="<f4").tobytes())
    parts.append(_pack_bitset(rec.pair_labels, hdr.bitset_bytes))
    for cfr in rec.cfrs:
        parts.append(np.ascontiguousarray(cfr.data, dtype="<c8").tobytes())
    return b"".join(parts)


class DatasetWriter:
    def __init__(self, path: str, s: Scenario, n_samples: int):
        self.header = DatasetHeader(
            n_bs=s.n_bs,
            n_cpe=s.n_cpe,
            n_rx=s.n_rx,
            n_tx=s.n_tx,
            n_subcarriers=s.n_subcarriers,
            n_samples=n_samples,
        )
        self._fh = open(path, "wb")
        self._fh.write(
            _HEADER.pack(
                DATASET_MAGIC,
                DATASET_VERSION,
                s.n_bs,
                s.n_cpe,
                s.n_rx,
                s.n_tx,
                s.n_subcarriers,
                n_samples,
            )
        )
        self._written = 0

    def write(self, rec: SampleRecord) -> None:
        if len(rec.cfrs) != self.header.n_pairs:
            raise DatasetError(
                f"record has {len(rec.cfrs)} CFRs, header says {self.header.n_pairs}"
            )
        self._fh.write(_record_bytes(rec, self.header))
        self._written += 1

    def close(self) -> None:
        if self._written != self.header.n_samples:
            self._fh.close()
            raise DatasetError(
                f"wrote {self._written} samples, header says {self.header.n_samples}"
            )
        self._fh.close()

    def __enter__(self) -> "DatasetWriter":
        return self

    def __exit__(self, exc_type, *_) -> None:
        if exc_type is None:
            self.close()
        else:
            self._fh.close()


class DatasetReader:
    """Random-access reader over a dataset file (records are fixed-size)."""

    def __init__(self, path: str):
        self.path = path
        self._fh = open(path, "rb")
        raw = self._fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise DatasetError(f"{path}: truncated header")
        magic, version, m, n, n_rx, n_tx, n_c, count = _HEADER.unpack(raw)
        if magic != DATASET_MAGIC:
            raise DatasetError(f"{path}: bad magic {magic!r}")
        if version != DATASET_VERSION:
            raise DatasetError(f"{path}: unsupported version {version}")
        self.header = DatasetHeader(m, n, n_rx, n_tx, n_c, count)

    def __len__(self) -> int:
        return self.header.n_samples

    def read(self, index: int) -> SampleRecord:
        hdr = self.header
        if not 0 <= index < hdr.n_samples:
            raise IndexError(index)
        self._fh.seek(_HEADER.size + index * hdr.record_bytes)
        raw = self._fh.read(hdr.record_bytes)
        if len(raw) < hdr.record_bytes:
            raise DatasetError(f"{self.path}: truncated record {index}")
        scene = raw[0]
        pos = np.frombuffer(raw, dtype="<f4", count=3, offset=1).astype(np.float64)
        uav = None if np.isnan(pos).all() else pos
        off = 1 + 12
        bits = _unpack_bitset(raw[off : off + hdr.bitset_bytes], hdr.n_pairs)
        off += hdr.bitset_bytes
        cfrs = []
        for flat in range(1, hdr.n_pairs + 1):
            data = np.frombuffer(raw, dtype="<c8", count=hdr.cfr_values, offset=off)
            cfrs.append(
                CfrTensor(
                    pair=PairId.from_flat(flat, hdr.n_cpe),
                    data=data.reshape(hdr.n_rx, hdr.n_tx, hdr.n_subcarriers).astype(np.complex128),
                )
            )
            off += hdr.cfr_values * 8
        return SampleRecord(scene_label=scene, uav_position=uav, pair_labels=bits, cfrs=cfrs)

    def __iter__(self):
        for i in range(len(self)):
            yield self.read(i)

    def close(self) -> None:
        self._fh.close()


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_sample(s: Scenario, with_uav: bool, rng: np.random.Generator) -> SampleRecord:
    """One sample: draw position (if any), trace, phase-augment, synthesize,
    and label every pair. Draw order is fixed: position first, then pairs
    in flat-index order."""
    uav = sample_uav_position(s, rng) if with_uav else None
    labels = np.zeros(s.n_pairs, dtype=np.uint8)
    cfrs = []
    for idx, pair in enumerate(s.pairs()):
        ps = trace_paths(s, pair, uav)
        ps = augment_phase(ps, rng)
        cfrs.append(synthesize_cfr(s, ps, rng=rng))
        labels[idx] = pair_label(ps, s.pair_power_floor_db)
    return SampleRecord(
        scene_label=1 if with_uav else 0,
        uav_position=uav,
        pair_labels=labels if with_uav else np.zeros_like(labels),
        cfrs=cfrs,
    )


def generate_dataset(
    s: Scenario, n_with_uav: int, n_without: int, seed: int, out_path: str
) -> dict:
    """Write a dataset file (with-UAV samples first) plus a manifest JSON
    alongside; returns the manifest dict.

    Each sample is built from its own substream of ``seed``, so the file
    is byte-identical no matter how generation is scheduled.
    """
    from .rng import substream

    if n_with_uav < 0 or n_without < 0:
        raise DatasetError("sample counts must be >= 0")
    if n_with_uav + n_without == 0:
        raise DatasetError("refusing to generate an empty dataset")
    total = n_with_uav + n_without
    with DatasetWriter(out_path, s, total) as writer:
        for idx in range(total):
            rng = substream(seed, "dataset", idx)
            writer.write(build_sample(s, with_uav=idx < n_with_uav, rng=rng))
    manifest = {
        "format_version": DATASET_VERSION,
        "seed": seed,
        "scenario_hash": s.hash(),
        "counts": {"with_uav": n_with_uav, "without_uav": n_without},
        "file_sha256": file_sha256(out_path),
    }
    with open(out_path + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
