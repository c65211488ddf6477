"""Reference agents: random phases/beamformers, and closed-form MRC receive /
zero-forcing transmit beamformers computed from (possibly noisy) CSI."""

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, Geometry
from .env import Action, random_action
from .errors import DegenerateChannelError
from .linalg import hermitian, inv_scalar


def randpsbf_action(geom: Geometry, p_a_max: float, p_u_max: float, rng) -> Action:
    """Uniform random phases and beamformers, both powers at their maxima."""
    return random_action(geom, p_a_max, p_u_max, rng, middle_third_powers=False)


@dataclass
class CsiView:
    """The channel knowledge available to a CSI-based agent."""

    channels: ChannelSet
    nmse_db: float = None  # None means perfect CSI
    haa_noise_var: float = 0.0


def corrupt_csi(
    channels: ChannelSet,
    rng,
    nmse_db=None,
    haa_noise_var: float = 0.0,
    zero_inter_ris: bool = False,
) -> CsiView:
    """Additive estimation noise at a configured NMSE per link.

    Per-link error variance is (linear NMSE) x (mean per-entry power of that
    link); the self-interference matrix gets its own absolute noise variance.
    `zero_inter_ris` blanks g_IU and f_DI in the view, mimicking estimators
    that never measure the cross-RIS paths.
    """
    links = channels.links()
    est = {}
    for name, h in links.items():
        if name == "H_AA":
            if haa_noise_var > 0.0:
                e = np.sqrt(haa_noise_var / 2.0) * (
                    rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
                )
                est[name] = h + e
            else:
                est[name] = h.copy()
            continue
        if zero_inter_ris and name in ("g_IU", "f_DI"):
            est[name] = np.zeros_like(h)
            continue
        if nmse_db is None:
            est[name] = h.copy()
            continue
        mean_power = np.mean(np.abs(h) ** 2)
        var = 10.0 ** (nmse_db / 10.0) * mean_power
        e = np.sqrt(var / 2.0) * (
            rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
        )
        est[name] = h + e
    return CsiView(
        channels=ChannelSet(**est), nmse_db=nmse_db, haa_noise_var=haa_noise_var
    )


def combined_ul_channel(ch: ChannelSet, theta_u, theta_d) -> np.ndarray:
    phi_u = np.exp(1j * np.asarray(theta_u)).reshape(-1, 1)
    phi_d = np.exp(1j * np.asarray(theta_d)).reshape(-1, 1)
    return ch.h_AU + ch.F_AI @ (phi_u * ch.f_IU) + ch.G_IA.T @ (phi_d * ch.g_IU)


def combined_dl_channel(ch: ChannelSet, theta_u, theta_d) -> np.ndarray:
    phi_u = np.exp(1j * np.asarray(theta_u)).reshape(-1, 1)
    phi_d = np.exp(1j * np.asarray(theta_d)).reshape(-1, 1)
    return ch.h_DA + (ch.g_DI * phi_d.T) @ ch.G_IA + (ch.f_DI * phi_u.T) @ ch.F_AI.T


def mrc_receive(csi: CsiView, theta_u, theta_d) -> np.ndarray:
    """Maximum-ratio combining receive vector (1, m_r), unit norm."""
    ul = combined_ul_channel(csi.channels, theta_u, theta_d)
    n = np.linalg.norm(ul)
    if n < 1e-30:
        raise DegenerateChannelError("combined uplink channel is zero")
    return hermitian(ul) / n


def ortho_complement_projector(h_aa: np.ndarray, w_r: np.ndarray) -> np.ndarray:
    """Projector onto the orthogonal complement of (w_r H_AA)^H.

    Returns identity when there is nothing to null.
    """
    v = w_r @ h_aa  # (1, m_t)
    vv = complex((v @ hermitian(v))[0, 0])
    m_t = h_aa.shape[1]
    if abs(vv) < 1e-30:
        return np.eye(m_t, dtype=np.complex128)
    return np.eye(m_t, dtype=np.complex128) - hermitian(v) @ (inv_scalar(vv) * v)


def zf_transmit(csi: CsiView, theta_u, theta_d, w_r: np.ndarray) -> np.ndarray:
    """Zero-forcing transmit vector: downlink-matched direction projected
    into the null space of the receive-combined SI channel."""
    m_t = csi.channels.H_AA.shape[1]
    if m_t <= 1:
        raise DegenerateChannelError("ZF transmit nulling needs m_t > 1")
    d = combined_dl_channel(csi.channels, theta_u, theta_d)  # (1, m_t)
    p = ortho_complement_projector(csi.channels.H_AA, w_r)
    w = p @ hermitian(d)
    n = np.linalg.norm(w)
    if n < 1e-30:
        raise DegenerateChannelError("downlink channel lies entirely in the SI direction")
    return w / n


def csi_env_action(
    agent_flat: np.ndarray, csi: CsiView, n1: int, n2: int
) -> Action:
    """Assemble the environment action for the CSI-based DRL baselines.

    The learner supplies phases and powers (flattened as theta_u, theta_d,
    p_a, p_u); the beamformers come from MRC / ZF on the CSI view.
    """
    agent_flat = np.asarray(agent_flat, dtype=float).ravel()
    theta_u = agent_flat[:n1]
    theta_d = agent_flat[n1 : n1 + n2]
    p_a, p_u = agent_flat[n1 + n2 : n1 + n2 + 2]
    w_r = mrc_receive(csi, theta_u, theta_d)  # (1, m_r) row
    w_t = zf_transmit(csi, theta_u, theta_d, w_r)
    return Action(theta_u, theta_d, w_t, w_r, float(p_a), float(p_u))
