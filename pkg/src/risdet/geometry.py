"""Operating-scenario geometry: positions, path lengths, delays, range bins.

The scene lives in the x-z plane.  A monostatic radar, a reflecting surface
(RIS), and a target define three propagation paths: radar-target-radar,
radar-(RIS)-target-radar (single bounce, either direction), and
radar-RIS-target-RIS-radar (double bounce).  The echo of the direct path is
anchored to range bin 1; the two assisted paths land in later bins set by
their excess path length and the range resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

C_LIGHT = 299792458.0  # m/s, exact

Point = tuple[float, float]


class InfeasibleGeometry(ValueError):
    """Assisted-path delays do not clear the direct echo by >= one bin."""


class WindowTooSmall(ValueError):
    """The double-bounce echo falls outside the K_P-cell window under test."""


@dataclass(frozen=True)
class ScenarioGeometry:
    """Radar/RIS/target placement plus the radar's resolution and carrier.

    Positions are (x, z) pairs in meters; range_resolution in meters;
    carrier_freq in Hz.
    """

    radar_pos: Point
    ris_pos: Point
    target_pos: Point
    range_resolution: float
    carrier_freq: float

    def __post_init__(self) -> None:
        for name in ("radar_pos", "ris_pos", "target_pos"):
            pt = tuple(float(v) for v in getattr(self, name))
            if len(pt) != 2:
                raise ValueError(f"{name} must be a 2D (x, z) point")
            object.__setattr__(self, name, pt)
        pts = (self.radar_pos, self.ris_pos, self.target_pos)
        if len(set(pts)) != 3:
            raise ValueError("radar, RIS, and target positions must be distinct")
        if not self.range_resolution > 0:
            raise ValueError("range_resolution must be positive")
        if not self.carrier_freq > 0:
            raise ValueError("carrier_freq must be positive")

    @property
    def wavelength(self) -> float:
        return C_LIGHT / self.carrier_freq


@dataclass(frozen=True)
class PathDelays:
    """Two-way delays (seconds) of the direct, single-, and double-bounce paths."""

    tau1: float
    tau2: float
    tau3: float


@dataclass(frozen=True)
class BinLayout:
    """Window cells holding the assisted echoes: bin n single, bin m double."""

    n: int
    m: int
    window_size: int

    def __post_init__(self) -> None:
        if not (1 < self.n < self.m <= self.window_size):
            raise ValueError(
                f"need 1 < n < m <= window_size, got n={self.n}, m={self.m}, "
                f"window_size={self.window_size}"
            )


def _dist(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def path_distances(geom: ScenarioGeometry) -> tuple[float, float, float]:
    """Euclidean distances (d_RT, d_RS, d_ST) between the three nodes."""
    d_rt = _dist(geom.radar_pos, geom.target_pos)
    d_rs = _dist(geom.radar_pos, geom.ris_pos)
    d_st = _dist(geom.ris_pos, geom.target_pos)
    return d_rt, d_rs, d_st


def compute_delays(d_rt: float, d_rs: float, d_st: float) -> PathDelays:
    """Propagation delays of the three paths.

    tau1 = 2 d_RT / c        (direct, two-way)
    tau2 = (d_RT + d_ST + d_RS) / c   (one bounce off the surface)
    tau3 = 2 (d_RS + d_ST) / c        (both legs via the surface)
    """
    if min(d_rt, d_rs, d_st) <= 0:
        raise ValueError("distances must be positive")
    return PathDelays(
        tau1=2.0 * d_rt / C_LIGHT,
        tau2=(d_rt + d_st + d_rs) / C_LIGHT,
        tau3=2.0 * (d_rs + d_st) / C_LIGHT,
    )


def check_feasibility(d_rt: float, d_rs: float, d_st: float, delta_r: float) -> bool:
    """True iff the assisted paths are resolvable from the direct echo.

    The single condition d_RS + d_ST - d_RT >= 2 delta_r implies that all
    three pairwise delay gaps clear one range bin (tau3 - tau2 equals
    tau2 - tau1, and tau3 - tau1 is their sum).
    """
    return d_rs + d_st - d_rt >= 2.0 * delta_r


def bin_layout(delays: PathDelays, delta_r: float, k_p: int) -> BinLayout:
    """Map the path delays onto window cells, direct echo pinned to bin 1.

    Bin offsets count whole resolution cells of one-way excess path:
    n = 1 + floor(c (tau2 - tau1) / 2 / delta_r), same for m with tau3.

    Raises:
        InfeasibleGeometry: if the single-bounce echo cannot clear bin 1.
        WindowTooSmall: if the double-bounce echo lands past cell k_p.
    """
    excess_n = C_LIGHT * (delays.tau2 - delays.tau1) / 2.0
    excess_m = C_LIGHT * (delays.tau3 - delays.tau1) / 2.0
    if excess_n < delta_r:
        raise InfeasibleGeometry(
            f"one-way excess path {excess_n:.3f} m is below one bin ({delta_r} m)"
        )
    n = 1 + math.floor(excess_n / delta_r)
    m = 1 + math.floor(excess_m / delta_r)
    if m > k_p:
        raise WindowTooSmall(f"double-bounce echo in bin {m} exceeds window {k_p}")
    return BinLayout(n=n, m=m, window_size=k_p)


def ris_angles(geom: ScenarioGeometry) -> tuple[float, float]:
    """Incidence and reflection angles at the surface, in degrees.

    theta_Si is measured from the surface normal (the z-axis) to the
    radar direction; theta_So is measured from the x-axis to the target
    direction.  The two conventions differ on purpose: they are kept as
    commonly quoted for this scene.
    """
    rx, rz = geom.radar_pos[0] - geom.ris_pos[0], geom.radar_pos[1] - geom.ris_pos[1]
    tx, tz = geom.target_pos[0] - geom.ris_pos[0], geom.target_pos[1] - geom.ris_pos[1]
    theta_si = math.degrees(math.atan2(abs(rx), abs(rz)))
    theta_so = 90.0 - math.degrees(math.atan2(abs(tx), abs(tz)))
    return theta_si, theta_so


def scenario_from_config(cfg: dict) -> ScenarioGeometry:
    """Build a ScenarioGeometry from a config mapping.

    Expected keys: radar_pos, ris_pos, target_pos (2-element sequences),
    delta_r, fc.
    """
    try:
        return ScenarioGeometry(
            radar_pos=tuple(float(v) for v in cfg["radar_pos"]),
            ris_pos=tuple(float(v) for v in cfg["ris_pos"]),
            target_pos=tuple(float(v) for v in cfg["target_pos"]),
            range_resolution=float(cfg["delta_r"]),
            carrier_freq=float(cfg["fc"]),
        )
    except KeyError as err:
        raise ValueError(f"scenario config missing field {err}") from err
