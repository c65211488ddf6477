"""MDP environment: apply an action, cancel self-interference, score rates.

Each `step` evolves mobility and fading, realizes the channel set, runs the
configured first-stage SI estimate, computes both SINRs and the weighted
rate reward, and assembles the next state from the observations plus the
executed action.
"""

from dataclasses import dataclass

import numpy as np

from .channel import (
    ChannelParams,
    ChannelSet,
    FadingState,
    Geometry,
    MobilityState,
    realize_channels,
)
from .errors import DimensionError, LifecycleError

SINR_STATE_CLIP = 1e6
UNIT_NORM_TOL = 1e-9


@dataclass
class Action:
    """RIS phases, unit-norm beamformers and the two transmit powers."""

    theta_u: np.ndarray  # (n1,) radians in [0, 2pi)
    theta_d: np.ndarray  # (n2,)
    w_t: np.ndarray  # (m_t, 1) complex, unit norm
    w_r: np.ndarray  # (1, m_r) complex, unit norm
    p_a: float
    p_u: float

    def validate(self, p_a_max: float, p_u_max: float):
        for th in (self.theta_u, self.theta_d):
            if not np.all(np.isfinite(th)):
                raise ValueError("non-finite RIS phase")
        for w in (self.w_t, self.w_r):
            n = np.linalg.norm(w)
            if abs(n - 1.0) > UNIT_NORM_TOL:
                raise ValueError(f"beamformer norm {n} not unit")
        tol = 1e-12
        if not (-tol <= self.p_a <= p_a_max + tol):
            raise ValueError(f"p_a={self.p_a} outside [0, {p_a_max}]")
        if not (-tol <= self.p_u <= p_u_max + tol):
            raise ValueError(f"p_u={self.p_u} outside [0, {p_u_max}]")

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [
                np.asarray(self.theta_u, dtype=float).ravel(),
                np.asarray(self.theta_d, dtype=float).ravel(),
                self.w_t.real.ravel(),
                self.w_t.imag.ravel(),
                self.w_r.real.ravel(),
                self.w_r.imag.ravel(),
                [self.p_a, self.p_u],
            ]
        )

    @staticmethod
    def flat_dim(n1: int, n2: int, m_t: int, m_r: int) -> int:
        return n1 + n2 + 2 * m_t + 2 * m_r + 2

    @staticmethod
    def unflatten(vec: np.ndarray, n1: int, n2: int, m_t: int, m_r: int) -> "Action":
        vec = np.asarray(vec, dtype=float).ravel()
        if vec.size != Action.flat_dim(n1, n2, m_t, m_r):
            raise DimensionError("flat action length mismatch")
        o = 0

        def take(k):
            nonlocal o
            part = vec[o : o + k]
            o += k
            return part

        theta_u = take(n1)
        theta_d = take(n2)
        wt = (take(m_t) + 1j * take(m_t)).reshape(m_t, 1)
        wr = (take(m_r) + 1j * take(m_r)).reshape(1, m_r)
        p_a, p_u = take(2)
        return Action(theta_u, theta_d, wt, wr, float(p_a), float(p_u))


@dataclass
class SIEstimate:
    h_hat: complex
    method: str  # lssic | hsic | none


@dataclass
class StepOutcome:
    next_state: np.ndarray
    reward: float
    gamma_bs: float
    gamma_dl: float
    r_bs: float
    r_dl: float


def lssic_estimate(
    channels: ChannelSet, action: Action, sigma_a2: float, rng
) -> SIEstimate:
    """Least-squares scalar SI estimate from a single unit-power pilot."""
    if action.p_a <= 0:
        raise ValueError("pilot requires positive BS transmit power")
    h_true = complex((action.w_r @ channels.H_AA @ action.w_t)[0, 0])
    wr_norm2 = float(np.linalg.norm(action.w_r) ** 2)
    s = np.sqrt(sigma_a2 * wr_norm2 / 2.0)
    v = s * (rng.standard_normal() + 1j * rng.standard_normal())
    s_pilot = 1.0 + 0.0j  # unit power; the LS solution is phase invariant
    y = h_true * np.sqrt(action.p_a) * s_pilot + v
    h_hat = (1.0 / np.sqrt(action.p_a)) * (1.0 / (np.conj(s_pilot) * s_pilot)) * np.conj(
        s_pilot
    ) * y
    return SIEstimate(h_hat=complex(h_hat), method="lssic")


def hsic_estimate(h_tilde: np.ndarray, action: Action) -> SIEstimate:
    """SI estimate from a pre-existing (possibly noisy) copy of H_AA."""
    if h_tilde.shape != (action.w_r.shape[1], action.w_t.shape[0]):
        raise DimensionError(
            f"H estimate shape {h_tilde.shape} incompatible with beamformers"
        )
    return SIEstimate(
        h_hat=complex((action.w_r @ h_tilde @ action.w_t)[0, 0]), method="hsic"
    )


def compute_sinrs(
    channels: ChannelSet,
    action: Action,
    h_hat: complex,
    sigma_a2: float,
    sigma_d2: float,
):
    """Uplink / downlink SINRs with the SI numerator term replaced by the
    post-cancellation residual."""
    phi_u = np.exp(1j * np.asarray(action.theta_u)).reshape(-1, 1)
    phi_d = np.exp(1j * np.asarray(action.theta_d)).reshape(-1, 1)
    wr, wt = action.w_r, action.w_t

    ul = (
        channels.h_AU
        + channels.F_AI @ (phi_u * channels.f_IU)
        + channels.G_IA.T @ (phi_d * channels.g_IU)
    )
    resid = complex((wr @ channels.H_AA @ wt)[0, 0]) - h_hat
    num_bs = action.p_u * abs(complex((wr @ ul)[0, 0])) ** 2
    den_bs = action.p_a * abs(resid) ** 2 + float(np.linalg.norm(wr) ** 2) * sigma_a2
    gamma_bs = num_bs / den_bs

    dl = (
        channels.h_DA
        + (channels.g_DI * phi_d.T) @ channels.G_IA
        + (channels.f_DI * phi_u.T) @ channels.F_AI.T
    )
    num_dl = action.p_a * abs(complex((dl @ wt)[0, 0])) ** 2
    interf = complex(
        (channels.g + channels.g_DI @ (phi_d * channels.g_IU)
         + channels.f_DI @ (phi_u * channels.f_IU))[0, 0]
    )
    den_dl = action.p_u * abs(interf) ** 2 + sigma_d2
    gamma_dl = num_dl / den_dl
    return float(gamma_bs), float(gamma_dl)


def random_action(
    geom: Geometry, p_a_max: float, p_u_max: float, rng, middle_third_powers=True
) -> Action:
    """Uniform random valid action (episode initialization rule)."""
    theta_u = rng.uniform(0.0, 2.0 * np.pi, size=geom.n1)
    theta_d = rng.uniform(0.0, 2.0 * np.pi, size=geom.n2)

    def unit(m, cols):
        w = rng.uniform(-1.0, 1.0, size=(m, cols)) + 1j * rng.uniform(
            -1.0, 1.0, size=(m, cols)
        )
        return w / np.linalg.norm(w)

    wt = unit(geom.m_t, 1)
    wr = unit(1, geom.m_r)
    if middle_third_powers:
        p_a = rng.uniform(p_a_max / 3.0, 2.0 * p_a_max / 3.0)
        p_u = rng.uniform(p_u_max / 3.0, 2.0 * p_u_max / 3.0)
    else:
        p_a, p_u = p_a_max, p_u_max
    return Action(theta_u, theta_d, wt, wr, float(p_a), float(p_u))


class FdRisEnv:
    """One full-duplex two-RIS cell as a reinforcement-learning environment."""

    def __init__(
        self,
        geom: Geometry,
        params: ChannelParams,
        rng,
        si_method: str = "lssic",
        delta: float = 0.5,
        hsic_noise_var: float = 1e-12,
        position_state: bool = False,
        mobility_speed: float = 0.0,
        square_side: float = 10.0,
    ):
        if si_method not in ("lssic", "hsic", "none"):
            raise ValueError(f"unknown SI method {si_method!r}")
        self.geom = geom
        self.params = params
        self.rng = rng
        self.si_method = si_method
        self.delta = delta
        self.hsic_noise_var = hsic_noise_var
        self.position_state = position_state
        self.mobility_speed = mobility_speed
        self.square_side = square_side
        self.sigma_a2 = params.noise_power_w
        self.sigma_d2 = params.noise_power_w
        self.fading = None
        self.mob_ul = None
        self.mob_dl = None
        self.channels = None
        self._ready = False

    @property
    def state_dim(self) -> int:
        g = self.geom
        base = 2 + Action.flat_dim(g.n1, g.n2, g.m_t, g.m_r)
        return base + (4 if self.position_state else 0)

    # -- lifecycle ---------------------------------------------------------

    def reset(self) -> np.ndarray:
        g = self.geom
        self.fading = FadingState(
            g, self.params.doppler_hz, self.params.step_interval_s, self.rng
        )
        half = self.square_side / 2.0
        self.mob_ul = MobilityState.start(
            g.ulue_pos, self.mobility_speed, self.rng, half_side=half
        )
        self.mob_dl = MobilityState.start(
            g.dlue_pos, self.mobility_speed, self.rng, half_side=half
        )
        if self.mobility_speed > 0.0:
            self.mob_ul.randomize_position(self.rng)
            self.mob_dl.randomize_position(self.rng)
        self._ready = True
        action = random_action(g, self.params.p_a_max, self.params.p_u_max, self.rng)
        return self.step(action).next_state

    def step(self, action) -> StepOutcome:
        """Advance one time step.

        `action` is either an ``Action`` or a callable receiving the freshly
        realized ``ChannelSet`` and returning an ``Action`` (used by the
        CSI-based closed-form baselines, which need the current channels).
        """
        if not self._ready:
            raise LifecycleError("step() before reset()")
        self.mob_ul.step(self.rng)
        self.mob_dl.step(self.rng)
        self.fading.advance(1)
        self.channels = realize_channels(
            self.geom,
            self.params,
            self.fading,
            self.rng,
            ulue_pos=self.mob_ul.position,
            dlue_pos=self.mob_dl.position,
        )
        if callable(action):
            action = action(self.channels)
        action.validate(self.params.p_a_max, self.params.p_u_max)

        if self.si_method == "lssic":
            est = lssic_estimate(self.channels, action, self.sigma_a2, self.rng)
        elif self.si_method == "hsic":
            e = np.sqrt(self.hsic_noise_var / 2.0) * (
                self.rng.standard_normal(self.channels.H_AA.shape)
                + 1j * self.rng.standard_normal(self.channels.H_AA.shape)
            )
            est = hsic_estimate(self.channels.H_AA + e, action)
        else:
            est = SIEstimate(h_hat=0.0 + 0.0j, method="none")

        gamma_bs, gamma_dl = compute_sinrs(
            self.channels, action, est.h_hat, self.sigma_a2, self.sigma_d2
        )
        r_bs = float(np.log2(1.0 + gamma_bs))
        r_dl = float(np.log2(1.0 + gamma_dl))
        reward = self.delta * r_bs + (1.0 - self.delta) * r_dl
        next_state = self._assemble_state(gamma_bs, gamma_dl, action)
        return StepOutcome(next_state, reward, gamma_bs, gamma_dl, r_bs, r_dl)

    def _assemble_state(self, gamma_bs, gamma_dl, action: Action) -> np.ndarray:
        parts = [
            np.clip([gamma_bs, gamma_dl], 0.0, SINR_STATE_CLIP),
            action.flatten(),
        ]
        if self.position_state:
            parts.append(self.mob_ul.position)
            parts.append(self.mob_dl.position)
        return np.concatenate(parts)
