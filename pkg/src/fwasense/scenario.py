"""Scene geometry, array/OFDM configuration, and BS-CPE pair indexing.

Coordinates are meters in a z-up frame with the origin at the ground
center of the monitored area. Antenna arrays are uniform planar arrays
(UPA) with half-wavelength spacing; each node's boresight points at the
scene center (the ground origin).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Configuration file failed to parse or violates an invariant."""


@dataclass(frozen=True)
class PairId:
    """One BS-CPE link, identified by 1-based (m, n) and its flat index."""

    m: int
    n: int
    flat: int

    @staticmethod
    def of(m: int, n: int, n_cpe: int) -> "PairId":
        return PairId(m, n, flat_pair_index(m, n, n_cpe))

    @staticmethod
    def from_flat(flat: int, n_cpe: int) -> "PairId":
        if flat < 1:
            raise ScenarioError(f"flat pair index must be >= 1, got {flat}")
        m = (flat - 1) // n_cpe + 1
        n = (flat - 1) % n_cpe + 1
        return PairId(m, n, flat)


def flat_pair_index(m: int, n: int, n_cpe: int) -> int:
    """Flat 1-based index of pair (m, n): N*(m-1) + n."""
    if m < 1:
        raise ScenarioError(f"BS index m must be >= 1, got {m}")
    if not 1 <= n <= n_cpe:
        raise ScenarioError(f"CPE index n must be in [1, {n_cpe}], got {n}")
    return n_cpe * (m - 1) + n


@dataclass(frozen=True)
class Scenario:
    """Node geometry plus MIMO-OFDM grid for one monitored scene.

    ``uav_reflect_amp`` / ``scatterer_reflect_amp`` are the dimensionless
    amplitude coefficients of the single-bounce channel model, and
    ``pair_power_floor_db`` is the relative power window used to decide
    whether a UAV bounce counts as affecting a pair. They are scenario
    knobs because meaningful values depend on the scene scale.
    """

    bs_positions: tuple[tuple[float, float, float], ...]
    cpe_positions: tuple[tuple[float, float, float], ...]
    uav_altitude: float
    uav_xy_range: float
    rx_array: tuple[int, int]  # (rows, cols) of the BS UPA
    tx_array: tuple[int, int]  # (rows, cols) of the CPE UPA
    carrier_hz: float
    bandwidth_hz: float
    subcarrier_spacing_hz: float
    n_subcarriers: int
    delay_keep: int
    scatterer_positions: tuple[tuple[float, float, float], ...] = ()
    noise_snr_db: float | None = None
    uav_reflect_amp: float = 0.3
    scatterer_reflect_amp: float = 0.5
    pair_power_floor_db: float = 40.0

    @property
    def n_bs(self) -> int:
        return len(self.bs_positions)

    @property
    def n_cpe(self) -> int:
        return len(self.cpe_positions)

    @property
    def n_pairs(self) -> int:
        return self.n_bs * self.n_cpe

    @property
    def n_rx(self) -> int:
        return self.rx_array[0] * self.rx_array[1]

    @property
    def n_tx(self) -> int:
        return self.tx_array[0] * self.tx_array[1]

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    def pairs(self) -> list[PairId]:
        """All pairs in flat-index order."""
        return [
            PairId.of(m, n, self.n_cpe)
            for m in range(1, self.n_bs + 1)
            for n in range(1, self.n_cpe + 1)
        ]

    def pair_positions(self, pair: PairId) -> tuple[np.ndarray, np.ndarray]:
        """(bs_position, cpe_position) of a pair as float64 arrays."""
        if not (1 <= pair.m <= self.n_bs and 1 <= pair.n <= self.n_cpe):
            raise ScenarioError(f"pair ({pair.m},{pair.n}) outside {self.n_bs}x{self.n_cpe} grid")
        bs = np.asarray(self.bs_positions[pair.m - 1], dtype=np.float64)
        cpe = np.asarray(self.cpe_positions[pair.n - 1], dtype=np.float64)
        return bs, cpe

    def validate(self) -> None:
        if self.n_bs < 1:
            raise ScenarioError("bs_positions: need at least one BS")
        if self.n_cpe < 1:
            raise ScenarioError("cpe_positions: need at least one CPE")
        for name, arr in (("rx_array", self.rx_array), ("tx_array", self.tx_array)):
            if len(arr) != 2 or arr[0] < 1 or arr[1] < 1:
                raise ScenarioError(f"{name}: rows/cols must be positive, got {arr}")
        if self.n_subcarriers < 1:
            raise ScenarioError(f"n_subcarriers: must be >= 1, got {self.n_subcarriers}")
        if not 1 <= self.delay_keep <= self.n_subcarriers:
            raise ScenarioError(
                f"delay_keep: must be in [1, {self.n_subcarriers}], got {self.delay_keep}"
            )
        for name, value in (
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("subcarrier_spacing_hz", self.subcarrier_spacing_hz),
        ):
            if value <= 0:
                raise ScenarioError(f"{name}: must be positive, got {value}")
        occupied = self.n_subcarriers * self.subcarrier_spacing_hz
        if occupied > self.bandwidth_hz + self.subcarrier_spacing_hz:
            raise ScenarioError(
                f"n_subcarriers: occupied bandwidth {occupied:.0f} Hz exceeds "
                f"bandwidth_hz {self.bandwidth_hz:.0f} Hz (+1 spacing tolerance)"
            )
        if self.uav_xy_range < 0:
            raise ScenarioError(f"uav_xy_range: must be >= 0, got {self.uav_xy_range}")
        for name, value in (
            ("uav_reflect_amp", self.uav_reflect_amp),
            ("scatterer_reflect_amp", self.scatterer_reflect_amp),
        ):
            if value <= 0:
                raise ScenarioError(f"{name}: must be positive, got {value}")
        if self.pair_power_floor_db < 0:
            raise ScenarioError(
                f"pair_power_floor_db: must be >= 0, got {self.pair_power_floor_db}"
            )
        for name, pts in (
            ("bs_positions", self.bs_positions),
            ("cpe_positions", self.cpe_positions),
            ("scatterer_positions", self.scatterer_positions),
        ):
            for i, p in enumerate(pts):
                if len(p) != 3 or not all(np.isfinite(p)):
                    raise ScenarioError(f"{name}[{i}]: expected finite (x, y, z), got {p}")

    def canonical_json(self) -> str:
        return json.dumps(_to_schema_dict(self), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        """sha256 of the canonical schema serialization."""
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


_REQUIRED_KEYS = {
    "v",
    "bs_positions",
    "cpe_positions",
    "uav_altitude",
    "uav_xy_range",
    "rx_array",
    "tx_array",
    "carrier_hz",
    "bandwidth_hz",
    "subcarrier_spacing_hz",
    "n_subcarriers",
    "delay_keep",
}
_OPTIONAL_KEYS = {
    "scatterer_positions",
    "noise_snr_db",
    "uav_reflect_amp",
    "scatterer_reflect_amp",
    "pair_power_floor_db",
}


def _to_schema_dict(s: Scenario) -> dict:
    d = {
        "v": SCHEMA_VERSION,
        "bs_positions": [list(p) for p in s.bs_positions],
        "cpe_positions": [list(p) for p in s.cpe_positions],
        "uav_altitude": s.uav_altitude,
        "uav_xy_range": s.uav_xy_range,
        "rx_array": list(s.rx_array),
        "tx_array": list(s.tx_array),
        "carrier_hz": s.carrier_hz,
        "bandwidth_hz": s.bandwidth_hz,
        "subcarrier_spacing_hz": s.subcarrier_spacing_hz,
        "n_subcarriers": s.n_subcarriers,
        "delay_keep": s.delay_keep,
        "scatterer_positions": [list(p) for p in s.scatterer_positions],
        "uav_reflect_amp": s.uav_reflect_amp,
        "scatterer_reflect_amp": s.scatterer_reflect_amp,
        "pair_power_floor_db": s.pair_power_floor_db,
    }
    if s.noise_snr_db is not None:
        d["noise_snr_db"] = s.noise_snr_db
    return d


def scenario_from_dict(raw: dict, where: str = "<dict>") -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError(f"{where}: top level must be a JSON object")
    unknown = set(raw) - _REQUIRED_KEYS - _OPTIONAL_KEYS
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")
    missing = _REQUIRED_KEYS - set(raw)
    if missing:
        raise ScenarioError(f"{where}: missing keys {sorted(missing)}")
    if raw["v"] != SCHEMA_VERSION:
        raise ScenarioError(f"{where}: unsupported schema version {raw['v']!r}")

    def points(key: str) -> tuple[tuple[float, float, float], ...]:
        return tuple(tuple(float(c) for c in p) for p in raw.get(key, ()))

    try:
        s = Scenario(
            bs_positions=points("bs_positions"),
            cpe_positions=points("cpe_positions"),
            uav_altitude=float(raw["uav_altitude"]),
            uav_xy_range=float(raw["uav_xy_range"]),
            rx_array=tuple(int(x) for x in raw["rx_array"]),
            tx_array=tuple(int(x) for x in raw["tx_array"]),
            carrier_hz=float(raw["carrier_hz"]),
            bandwidth_hz=float(raw["bandwidth_hz"]),
            subcarrier_spacing_hz=float(raw["subcarrier_spacing_hz"]),
            n_subcarriers=int(raw["n_subcarriers"]),
            delay_keep=int(raw["delay_keep"]),
            scatterer_positions=points("scatterer_positions"),
            noise_snr_db=None if raw.get("noise_snr_db") is None else float(raw["noise_snr_db"]),
            uav_reflect_amp=float(raw.get("uav_reflect_amp", 0.3)),
            scatterer_reflect_amp=float(raw.get("scatterer_reflect_amp", 0.5)),
            pair_power_floor_db=float(raw.get("pair_power_floor_db", 40.0)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"{where}: malformed field value ({exc})") from exc
    s.validate()
    return s


def load_scenario(path: str) -> Scenario:
    """Load and validate a scenario JSON file (schema v1, unknown keys rejected)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(raw, where=path)


def save_scenario(s: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_to_schema_dict(s), fh, indent=2, sort_keys=True)
        fh.write("\n")


def sample_uav_position(s: Scenario, rng: np.random.Generator) -> np.ndarray:
    """UAV position with x, y ~ U[-r, r] at the configured altitude."""
    r = s.uav_xy_range
    x = rng.uniform(-r, r) if r > 0 else 0.0
    y = rng.uniform(-r, r) if r > 0 else 0.0
    return np.array([x, y, s.uav_altitude], dtype=np.float64)


def look_at_frame(position: np.ndarray) -> np.ndarray:
    """Orthonormal basis (rows: boresight, columns-axis, rows-axis) of a UPA
    at ``position`` whose boresight points at the scene origin.

    Array columns run along the horizontal axis perpendicular to the
    boresight; array rows along the remaining (mostly vertical) axis.
    """
    position = np.asarray(position, dtype=np.float64)
    bore = -position
    norm = np.linalg.norm(bore)
    if norm < 1e-9:  # node at the origin: point straight down
        bore = np.array([0.0, 0.0, -1.0])
    else:
        bore = bore / norm
    up = np.array([0.0, 0.0, 1.0])
    cols = np.cross(bore, up)
    if np.linalg.norm(cols) < 1e-9:  # boresight vertical: pick x as columns axis
        cols = np.array([1.0, 0.0, 0.0])
    cols = cols / np.linalg.norm(cols)
    rows = np.cross(cols, bore)
    return np.stack([bore, cols, rows])
