"""Link-level channel generation for the two-RIS full-duplex cell.

Covers array geometry, ULA/UPA steering vectors, log-distance path loss,
Rician/Rayleigh synthesis, sum-of-sinusoids Doppler evolution of the NLOS
parts, and a bounded random-direction mobility model for the two users.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, GeometryError
from .linalg import hermitian, kron

C_LIGHT = 2.998e8
REFERENCE_DISTANCE_M = 1.0
JAKES_OSCILLATORS = 16


@dataclass
class Geometry:
    """Node positions (meters, 2-D) and array sizes."""

    bs_pos: tuple = (0.0, 0.0)
    ris1_pos: tuple = (50.0, 22.0)
    ris2_pos: tuple = (50.0, -22.0)
    ulue_pos: tuple = (50.0, 20.0)
    dlue_pos: tuple = (50.0, -20.0)
    m_t: int = 10
    m_r: int = 10
    n1h: int = 6
    n1v: int = 6
    n2h: int = 6
    n2v: int = 6
    spacing: float = 0.5  # element spacing in carrier wavelengths

    def __post_init__(self):
        for n in (self.m_t, self.m_r, self.n1h, self.n1v, self.n2h, self.n2v):
            if n < 1:
                raise GeometryError("antenna/element counts must be >= 1")

    @property
    def n1(self):
        return self.n1h * self.n1v

    @property
    def n2(self):
        return self.n2h * self.n2v


@dataclass
class ChannelParams:
    fc_hz: float = 3.5e9
    bandwidth_hz: float = 100e6
    noise_dbm_hz: float = -174.0
    beta_ia_db: float = 9.0  # Rician K, BS <-> RIS links
    beta_ui_db: float = 6.0  # Rician K, RIS <-> user links
    alpha_ai: float = 2.2
    alpha_iu: float = 2.2
    alpha_au: float = 3.35
    alpha_r: float = 3.35
    alpha_u: float = 4.5
    sigma_aa2: float = 0.1  # residual SI channel variance
    doppler_hz: float = 100.0
    step_interval_s: float = 1e-3
    p_u_max: float = 0.05
    p_a_max: float = 1.0

    @property
    def noise_power_w(self) -> float:
        """Thermal noise over the full bandwidth, watts."""
        dbm = self.noise_dbm_hz + 10.0 * np.log10(self.bandwidth_hz)
        return 10.0 ** ((dbm - 30.0) / 10.0)


# scenario presets from the urban / shadowed-urban experiments
SCENARIOS = {
    "urban": dict(alpha_au=3.35, alpha_r=3.35, alpha_u=4.5, p_u_max=0.05, p_a_max=1.0),
    "shadowed-urban": dict(
        alpha_au=4.5, alpha_r=4.5, alpha_u=4.5, p_u_max=0.2, p_a_max=3.16
    ),
}


def scenario_params(name: str, **overrides) -> ChannelParams:
    if name not in SCENARIOS:
        raise GeometryError(f"unknown scenario {name!r}")
    kw = dict(SCENARIOS[name])
    kw.update(overrides)
    return ChannelParams(**kw)


# -- steering vectors ------------------------------------------------------


def steering_ula(m: int, theta: float, phi: float, d_over_lambda: float) -> np.ndarray:
    """y-axis ULA steering vector (m, 1); theta from +z, phi from +x."""
    if m < 1:
        raise GeometryError("ULA needs at least one element")
    idx = np.arange(m)
    phase = 2.0 * np.pi * d_over_lambda * idx * np.sin(theta) * np.sin(phi)
    return np.exp(1j * phase).reshape(m, 1)


def steering_upa(
    nz: int, nx: int, theta: float, phi: float, d_over_lambda: float
) -> np.ndarray:
    """xz-plane UPA steering vector (nz*nx, 1) as kron(a_z, a_x).

    Both factors carry the conjugated (Hermitian-ordered) phase progression:
    a_z entries exp(-j 2 pi d/lambda n cos(theta)), a_x entries
    exp(-j 2 pi d/lambda n sin(theta) cos(phi)).
    """
    if nz < 1 or nx < 1:
        raise GeometryError("UPA needs at least one element per axis")
    kz = 2.0 * np.pi * d_over_lambda * np.cos(theta)
    kx = 2.0 * np.pi * d_over_lambda * np.sin(theta) * np.cos(phi)
    a_z = hermitian(np.exp(1j * kz * np.arange(nz)).reshape(1, nz))
    a_x = hermitian(np.exp(1j * kx * np.arange(nx)).reshape(1, nx))
    return kron(a_z, a_x)


def path_loss_db(fc_hz: float, d_m: float, alpha: float) -> float:
    """Log-distance path loss in dB (always <= 0 for d >= 1 m)."""
    if d_m < REFERENCE_DISTANCE_M:
        raise GeometryError(f"distance {d_m} m below reference {REFERENCE_DISTANCE_M} m")
    return -20.0 * np.log10(4.0 * np.pi * fc_hz / C_LIGHT) - 10.0 * alpha * np.log10(
        d_m / REFERENCE_DISTANCE_M
    )


def path_amplitude(fc_hz: float, d_m: float, alpha: float) -> float:
    return 10.0 ** (path_loss_db(fc_hz, d_m, alpha) / 20.0)


def rician_mix(los: np.ndarray, nlos: np.ndarray, beta_linear: float) -> np.ndarray:
    """sqrt(b/(1+b)) * LOS + sqrt(1/(1+b)) * NLOS."""
    if los.shape != nlos.shape:
        raise DimensionError(f"LOS {los.shape} vs NLOS {nlos.shape}")
    if beta_linear < 0:
        raise ValueError("Rician factor must be nonnegative")
    w_los = np.sqrt(beta_linear / (1.0 + beta_linear))
    w_nlos = np.sqrt(1.0 / (1.0 + beta_linear))
    return w_los * los + w_nlos * nlos


def sample_rayleigh(rows: int, cols: int, variance: float, rng) -> np.ndarray:
    """i.i.d. circularly-symmetric complex Gaussian entries, given variance."""
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    s = np.sqrt(variance / 2.0)
    return s * (
        rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    )


# -- time evolution --------------------------------------------------------

# link name -> shape builder; H_AA carries no path loss
LINK_SHAPES = {
    "f_IU": lambda g: (g.n1, 1),
    "F_AI": lambda g: (g.m_r, g.n1),
    "h_AU": lambda g: (g.m_r, 1),
    "G_IA": lambda g: (g.n2, g.m_t),
    "g_IU": lambda g: (g.n2, 1),
    "g_DI": lambda g: (1, g.n2),
    "h_DA": lambda g: (1, g.m_t),
    "f_DI": lambda g: (1, g.n1),
    "g": lambda g: (1, 1),
    "H_AA": lambda g: (g.m_r, g.m_t),
}


class FadingState:
    """Sum-of-sinusoids Doppler evolution of every link's NLOS component.

    Each matrix entry gets its own bank of oscillators with random arrival
    angles and phases, so the marginal stays CN(0, 1) and entries decorrelate
    at the Doppler rate.
    """

    def __init__(self, geom: Geometry, doppler_hz: float, step_s: float, rng):
        self.doppler_hz = doppler_hz
        self.step_s = step_s
        self.t = 0
        self._osc = {}
        k = JAKES_OSCILLATORS
        for name, shape_fn in LINK_SHAPES.items():
            rows, cols = shape_fn(geom)
            base = 2.0 * np.pi * (np.arange(k) + rng.uniform(size=(rows, cols, 1))) / k
            phases = rng.uniform(0.0, 2.0 * np.pi, size=(rows, cols, k))
            self._osc[name] = (np.cos(base), phases)

    def advance(self, steps: int = 1):
        if steps < 0:
            raise ValueError("steps must be nonnegative")
        self.t += steps

    def nlos(self, name: str) -> np.ndarray:
        cos_alpha, phases = self._osc[name]
        arg = (
            2.0 * np.pi * self.doppler_hz * self.t * self.step_s * cos_alpha + phases
        )
        return np.exp(1j * arg).sum(axis=-1) / np.sqrt(JAKES_OSCILLATORS)


@dataclass
class MobilityState:
    """Random-direction walk reflected at the walls of a square region."""

    center: np.ndarray
    position: np.ndarray
    heading: float
    speed: float = 1.0
    half_side: float = 5.0

    @classmethod
    def start(cls, center, speed, rng, half_side=5.0):
        center = np.asarray(center, dtype=float)
        return cls(
            center=center,
            position=center.copy(),
            heading=rng.uniform(0.0, 2.0 * np.pi),
            speed=speed,
            half_side=half_side,
        )

    def randomize_position(self, rng):
        self.position = self.center + rng.uniform(
            -self.half_side, self.half_side, size=2
        )
        self.heading = rng.uniform(0.0, 2.0 * np.pi)

    def step(self, rng):
        if self.speed == 0.0:
            return
        self.heading += rng.uniform(-np.pi / 8.0, np.pi / 8.0)
        x = self.position[0] + self.speed * np.cos(self.heading)
        y = self.position[1] + self.speed * np.sin(self.heading)
        lo_x, hi_x = self.center[0] - self.half_side, self.center[0] + self.half_side
        lo_y, hi_y = self.center[1] - self.half_side, self.center[1] + self.half_side
        if x < lo_x or x > hi_x:
            x = np.clip(2.0 * lo_x - x if x < lo_x else 2.0 * hi_x - x, lo_x, hi_x)
            self.heading = np.pi - self.heading
        if y < lo_y or y > hi_y:
            y = np.clip(2.0 * lo_y - y if y < lo_y else 2.0 * hi_y - y, lo_y, hi_y)
            self.heading = -self.heading
        self.position = np.array([x, y])


# -- per-step channel realization ------------------------------------------


@dataclass
class ChannelSet:
    """All links of one time step, path loss applied (linear amplitude)."""

    f_IU: np.ndarray
    F_AI: np.ndarray
    h_AU: np.ndarray
    G_IA: np.ndarray
    g_IU: np.ndarray
    g_DI: np.ndarray
    h_DA: np.ndarray
    f_DI: np.ndarray
    g: np.ndarray
    H_AA: np.ndarray

    def links(self) -> dict:
        return {name: getattr(self, name) for name in LINK_SHAPES}


def _azimuth(src, dst) -> float:
    d = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    return float(np.arctan2(d[1], d[0]))


def _distance(a, b) -> float:
    d = float(np.hypot(b[0] - a[0], b[1] - a[1]))
    if d < 1e-9:
        raise GeometryError("coincident nodes")
    # clamp to the path-loss reference distance so mobile users grazing a
    # RIS never push the model outside its validity region
    return max(d, REFERENCE_DISTANCE_M)


def realize_channels(
    geom: Geometry,
    params: ChannelParams,
    fading: FadingState,
    rng,
    ulue_pos=None,
    dlue_pos=None,
) -> ChannelSet:
    """Build one ChannelSet from geometry, fading state and path loss.

    `rng` is unused for the fading itself (that lives in `fading`) but kept
    in the signature for API symmetry with future stochastic extensions.
    """
    del rng
    ulue = np.asarray(ulue_pos if ulue_pos is not None else geom.ulue_pos, dtype=float)
    dlue = np.asarray(dlue_pos if dlue_pos is not None else geom.dlue_pos, dtype=float)
    bs, ris1, ris2 = geom.bs_pos, geom.ris1_pos, geom.ris2_pos
    fc = params.fc_hz
    elev = np.pi / 2.0  # all nodes share one height
    beta_ia = 10.0 ** (params.beta_ia_db / 10.0)
    beta_ui = 10.0 ** (params.beta_ui_db / 10.0)

    def a_bs(toward):
        return steering_ula(geom.m_r, elev, _azimuth(bs, toward), geom.spacing)

    def a_bs_t(toward):
        return steering_ula(geom.m_t, elev, _azimuth(bs, toward), geom.spacing)

    def a_ris1(toward):
        return steering_upa(geom.n1v, geom.n1h, elev, _azimuth(ris1, toward), geom.spacing)

    def a_ris2(toward):
        return steering_upa(geom.n2v, geom.n2h, elev, _azimuth(ris2, toward), geom.spacing)

    def pl(a, b, alpha):
        return path_amplitude(fc, _distance(a, b), alpha)

    # Rician links (BS <-> RIS and RIS <-> user with LOS)
    f_iu = pl(ulue, ris1, params.alpha_iu) * rician_mix(
        a_ris1(ulue), fading.nlos("f_IU"), beta_ui
    )
    F_ai = pl(ris1, bs, params.alpha_ai) * rician_mix(
        a_bs(ris1) @ hermitian(a_ris1(bs)), fading.nlos("F_AI"), beta_ia
    )
    G_ia = pl(bs, ris2, params.alpha_ai) * rician_mix(
        a_ris2(bs) @ hermitian(a_bs_t(ris2)), fading.nlos("G_IA"), beta_ia
    )
    g_di = pl(ris2, dlue, params.alpha_iu) * rician_mix(
        hermitian(a_ris2(dlue)), fading.nlos("g_DI"), beta_ui
    )
    # Rayleigh links (blocked direct paths, inter-RIS and inter-user)
    h_au = pl(bs, ulue, params.alpha_au) * fading.nlos("h_AU")
    h_da = pl(bs, dlue, params.alpha_au) * fading.nlos("h_DA")
    g_iu = pl(ulue, ris2, params.alpha_r) * fading.nlos("g_IU")
    f_di = pl(ris1, dlue, params.alpha_r) * fading.nlos("f_DI")
    g_ud = pl(ulue, dlue, params.alpha_u) * fading.nlos("g")
    # residual self-interference channel, no path loss
    h_aa = np.sqrt(params.sigma_aa2) * fading.nlos("H_AA")

    return ChannelSet(
        f_IU=f_iu,
        F_AI=F_ai,
        h_AU=h_au,
        G_IA=G_ia,
        g_IU=g_iu,
        g_DI=g_di,
        h_DA=h_da,
        f_DI=f_di,
        g=g_ud,
        H_AA=h_aa,
    )
