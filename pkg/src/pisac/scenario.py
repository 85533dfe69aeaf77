"""System geometry and deterministic channel synthesis.

The transmitter is a bank of n_t parallel dielectric waveguides in the
xy-plane; each carries one pinching antenna (PA) whose position along
the guide (y_t) is adjustable.  Every user has n_k movable antennas
(MAs) confined to a small square region.  A fixed uniform linear array
of n_r elements receives the sensing echo from a point target.

All channels are deterministic functions of geometry: line-of-sight
entries follow an inverse-distance law with a propagation phase, the
scattered component sums per-scatterer two-hop contributions, and the
two are mixed by the Rician factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cmatrix import CMatrix

SPEED_OF_LIGHT = 299792458.0

# Default sampling boxes (axis-aligned, metres): two user regions, the
# target volume and the scatterer volume.
DEFAULT_USER_BOXES = (
    ((-5.0, -5.0, 5.0), (-3.0, -3.0, 10.0)),
    ((-5.0, 13.0, 5.0), (-3.0, 15.0, 10.0)),
)
DEFAULT_TARGET_BOX = ((12.0, 0.0, 1.0), (15.0, 5.0, 5.0))
DEFAULT_SCATTERER_BOX = ((-2.0, 3.0, 0.0), (0.0, 7.0, 3.0))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with per-axis [lo, hi] bounds."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != 3 or len(self.hi) != 3:
            raise ValueError("boxes are 3-D")
        for a, b in zip(self.lo, self.hi):
            if a > b:
                raise ValueError(f"box lo {a} > hi {b}")

    def contains(self, p, tol: float = 0.0) -> bool:
        return all(a - tol <= x <= b + tol
                   for x, a, b in zip(p, self.lo, self.hi))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi)


def _as_box(b) -> Box:
    if isinstance(b, Box):
        return b
    return Box(tuple(b[0]), tuple(b[1]))


@dataclass
class SystemConfig:
    """Physical constants, geometry bounds and penalty weights."""

    wavelength: float = 0.06          # m (5 GHz carrier)
    refractive_index: float = 1.4     # effective in-guide index
    n_t: int = 6                      # waveguides / transmit PAs
    n_r: int = 4                      # receive array elements
    n_k: int = 3                      # MAs per user
    n_users: int = 2                  # K
    n_scatterers: int = 2             # L
    d_t: float = 10.0                 # waveguide length, m
    d_r: float = 0.3                  # receive array length, m
    d_k: float = 0.15                 # MA region side, m
    d_min: float = 0.03               # minimum inter-MA spacing, m
    rician_k: float = 2.0
    sigma_c2: float = 1e-12           # -120 dB, W
    sigma_z2: float = 1e-12           # -120 dB, W
    p_max: float = 1.0                # W
    gamma0: float = 0.01              # sensing SINR threshold
    nu_s: float = 1000.0              # sensing penalty weight
    nu_d: float = 100.0               # spacing penalty weight (per user)
    rx_midpoint: tuple = (20.0, 20.0, 1.0)
    user_boxes: tuple = DEFAULT_USER_BOXES
    target_box: tuple = DEFAULT_TARGET_BOX
    scatterer_box: tuple = DEFAULT_SCATTERER_BOX
    seed: int = 0

    def __post_init__(self):
        if self.n_t < 2 or self.n_r < 2:
            raise ValueError("n_t and n_r must be >= 2")
        if min(self.n_k, self.n_users) < 1 or self.n_scatterers < 0:
            raise ValueError("counts must be positive")
        for name in ("wavelength", "d_t", "d_r", "d_k", "d_min",
                     "sigma_c2", "sigma_z2", "p_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.d_min > self.d_k:
            raise ValueError("d_min must not exceed the region side d_k")
        if self.rician_k < 0:
            raise ValueError("rician_k must be >= 0")
        boxes = [_as_box(b) for b in self.user_boxes]
        if len(boxes) < self.n_users:
            # Extend by shifting the last default region along y so that
            # configs with K > 2 stay usable out of the box.
            last = boxes[-1]
            while len(boxes) < self.n_users:
                lo = (last.lo[0], last.lo[1] + 18.0, last.lo[2])
                hi = (last.hi[0], last.hi[1] + 18.0, last.hi[2])
                last = Box(lo, hi)
                boxes.append(last)
        self.user_boxes = tuple(boxes[: self.n_users])
        self.target_box = _as_box(self.target_box)
        self.scatterer_box = _as_box(self.scatterer_box)
        self.rx_midpoint = tuple(float(v) for v in self.rx_midpoint)

    @property
    def carrier_hz(self) -> float:
        return SPEED_OF_LIGHT / self.wavelength


@dataclass(frozen=True)
class Scenario:
    """One sampled environment: user origins, scatterers and the target."""

    user_origins: np.ndarray   # (K, 3)
    scatterers: np.ndarray     # (L, 3)
    target: np.ndarray         # (3,)


@dataclass
class PAPlacement:
    """Per-waveguide PA offsets y_t; global positions follow the guide grid."""

    y_t: np.ndarray  # (n_t,)

    def __post_init__(self):
        self.y_t = np.asarray(self.y_t, dtype=np.float64).reshape(-1)

    def positions(self, config: SystemConfig) -> np.ndarray:
        """PA positions t_n = [(n-1) d_t/(n_t-1), y_t_n, 0], shape (n_t, 3)."""
        n_t = config.n_t
        if self.y_t.shape[0] != n_t:
            raise ValueError(f"expected {n_t} offsets, got {self.y_t.shape[0]}")
        x = np.arange(n_t) * config.d_t / (n_t - 1)
        return np.column_stack([x, self.y_t, np.zeros(n_t)])


@dataclass
class MAPlacement:
    """Local (x, y) MA coordinates per user, inside [0, d_k]^2 at z = 0."""

    local: np.ndarray  # (K, n_k, 2)

    def __post_init__(self):
        self.local = np.asarray(self.local, dtype=np.float64)
        if self.local.ndim != 3 or self.local.shape[2] != 2:
            raise ValueError("local coordinates must have shape (K, n_k, 2)")

    def global_positions(self, scenario: Scenario) -> np.ndarray:
        """Global MA positions u_kb = local + user origin, shape (K, n_k, 3)."""
        k, n_k, _ = self.local.shape
        pos = np.zeros((k, n_k, 3))
        pos[:, :, :2] = self.local
        return pos + scenario.user_origins[:, None, :]


def uniform_pa_grid(config: SystemConfig) -> PAPlacement:
    """Fixed-antenna baseline: y_t_n = (n-1) d_t / (n_t - 1)."""
    return PAPlacement(np.arange(config.n_t) * config.d_t / (config.n_t - 1))


def uniform_ma_grid(config: SystemConfig) -> MAPlacement:
    """Fixed-antenna baseline: MAs in a y-parallel ULA centred in x."""
    n_k = config.n_k
    y = (np.arange(n_k) * config.d_k / (n_k - 1) if n_k > 1
         else np.zeros(1))
    local = np.zeros((config.n_users, n_k, 2))
    local[:, :, 0] = config.d_k / 2.0
    local[:, :, 1] = y
    return MAPlacement(local)


def receive_positions(config: SystemConfig) -> np.ndarray:
    """Receive ULA positions: n_r points along y centred at rx_midpoint."""
    n_r = config.n_r
    offsets = (np.arange(n_r) - (n_r - 1) / 2.0) * config.d_r / (n_r - 1)
    pos = np.tile(np.asarray(config.rx_midpoint), (n_r, 1))
    pos[:, 1] += offsets
    return pos


def sample_scenario(config: SystemConfig, seed: int) -> Scenario:
    """Draw user origins, scatterers and the target uniformly from their boxes."""
    rng = np.random.default_rng(seed)
    users = np.array([box.sample(rng) for box in config.user_boxes])
    scatterers = np.array(
        [config.scatterer_box.sample(rng) for _ in range(config.n_scatterers)]
    ).reshape(config.n_scatterers, 3)
    target = config.target_box.sample(rng)
    return Scenario(users, scatterers, target)


def waveguide_matrix(pa: PAPlacement, config: SystemConfig) -> CMatrix:
    """Diagonal in-guide propagation matrix F(n,n) = exp(-j 2 pi y_n n_e / lambda)."""
    phase = 2.0 * np.pi * pa.y_t * config.refractive_index / config.wavelength
    return CMatrix(np.diag(np.cos(phase)), np.diag(-np.sin(phase)))


def los_channel(t, u, wavelength: float) -> complex:
    """Line-of-sight coefficient: magnitude lambda/(4 pi d), phase -2 pi d / lambda."""
    d = float(np.linalg.norm(np.asarray(t, float) - np.asarray(u, float)))
    if d == 0.0:
        raise ValueError("coincident transmit/receive points")
    mag = wavelength / (4.0 * np.pi * d)
    ph = -2.0 * np.pi * d / wavelength
    return complex(mag * math.cos(ph), mag * math.sin(ph))


def nlos_channel(t, u, scatterers, wavelength: float) -> complex:
    """Scattered coefficient: per-scatterer two-hop phase and amplitude, summed."""
    t = np.asarray(t, float)
    u = np.asarray(u, float)
    total = 0.0 + 0.0j
    for xi in np.atleast_2d(np.asarray(scatterers, float).reshape(-1, 3)):
        d_t = float(np.linalg.norm(t - xi))
        d_u = float(np.linalg.norm(u - xi))
        if d_t == 0.0 or d_u == 0.0:
            raise ValueError("scatterer coincides with an endpoint")
        ph = -2.0 * np.pi / wavelength * (d_u - d_t)
        total += (wavelength / (4.0 * np.pi)) * np.exp(1j * ph) / (d_t * d_u)
    return complex(total)


def user_channel(pa: PAPlacement, ma: MAPlacement, scenario: Scenario,
                 config: SystemConfig, k: int) -> CMatrix:
    """Rician channel H_k (n_k x n_t) for user k."""
    t_pos = pa.positions(config)
    u_pos = ma.global_positions(scenario)[k]
    lam = config.wavelength
    kap = config.rician_k
    h = np.zeros((config.n_k, config.n_t), dtype=np.complex128)
    for b in range(config.n_k):
        for n in range(config.n_t):
            los = los_channel(t_pos[n], u_pos[b], lam)
            nlos = nlos_channel(t_pos[n], u_pos[b], scenario.scatterers, lam)
            h[b, n] = (math.sqrt(kap / (kap + 1.0)) * los
                       + math.sqrt(1.0 / (kap + 1.0)) * nlos)
    return CMatrix.from_complex(h)


def target_steering(positions, q_p, wavelength: float) -> CMatrix:
    """Steering column: entry m = (lambda/4 pi) exp(-j 2 pi d_m / lambda) / d_m."""
    positions = np.atleast_2d(np.asarray(positions, float))
    q_p = np.asarray(q_p, float)
    d = np.linalg.norm(positions - q_p[None, :], axis=1)
    if np.any(d == 0.0):
        raise ValueError("target coincides with an array element")
    lam = wavelength
    vals = (lam / (4.0 * np.pi)) * np.exp(-2j * np.pi * d / lam) / d
    return CMatrix.from_complex(vals.reshape(-1, 1))


def sensing_channel(f_t: CMatrix, f_r: CMatrix) -> CMatrix:
    """Rank-one two-way sensing channel G = f_r f_t^H."""
    if f_t.shape[1] != 1 or f_r.shape[1] != 1:
        raise ValueError("steering inputs must be column vectors")
    from .cmatrix import cmul
    return cmul(f_r, f_t.conj_t())
