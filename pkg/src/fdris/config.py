"""Experiment configuration: line-oriented "section.key = value" files.

Unknown keys are hard errors; every key has a documented default, so an
empty file is a valid configuration.  The "small" and "paper" profiles
pre-set geometry and run lengths before the file is applied.
"""

from dataclasses import dataclass, fields

import numpy as np

from .channel import ChannelParams, Geometry, SCENARIOS
from .errors import ConfigError

VARIANTS = (
    "msf-drl-lssic",
    "msf-drl-hsic",
    "msf-drl-pos",
    "msf-q-drl",
    "gp-msf-q-drl",
    "perfcsi",
    "noiscsi",
    "oupsbf",
    "randpsbf",
)


@dataclass
class ExperimentConfig:
    scenario: str = "urban"
    # geometry
    mt: int = 10
    mr: int = 10
    n1h: int = 6
    n1v: int = 6
    n2h: int = 6
    n2v: int = 6
    spacing: float = 0.5
    bs_x: float = 0.0
    bs_y: float = 0.0
    ris1_x: float = 50.0
    ris1_y: float = 22.0
    ris2_x: float = 50.0
    ris2_y: float = -22.0
    ulue_x: float = 50.0
    ulue_y: float = 20.0
    dlue_x: float = 50.0
    dlue_y: float = -20.0
    # channel
    fc_hz: float = 3.5e9
    bandwidth_hz: float = 100e6
    noise_dbm_hz: float = -174.0
    beta_ia_db: float = 9.0
    beta_ui_db: float = 6.0
    alpha_ai: float = 2.2
    alpha_iu: float = 2.2
    sigma_aa2: float = 0.1
    doppler_hz: float = 100.0
    step_interval_s: float = 1e-3
    p_u_max: float = None  # scenario default unless set
    p_a_max: float = None
    # environment
    delta: float = 0.5
    hsic_noise_var: float = 1e-12
    mobility_speed: float = 0.0
    square_side: float = 10.0
    # agent
    variant: str = "msf-drl-lssic"
    bits: int = 2
    groups: int = 9
    hidden: int = 100
    fe_layers: int = 2
    noise_sigma0: float = 0.3
    ou_theta: float = 0.15
    ou_sigma: float = 0.3
    nmse_db: float = 0.0
    haa_noise_var: float = 1e-12
    zero_inter_ris_csi: bool = False
    # training
    gamma: float = 0.6
    buffer_size: int = 10000
    batch_size: int = 64
    soft_lambda: float = 0.005
    update_interval: int = 1
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    # run control
    episodes: int = 100
    steps: int = 1000
    runs: int = 8
    seed: int = 0
    out_dir: str = "out"

    def geometry(self) -> Geometry:
        return Geometry(
            bs_pos=(self.bs_x, self.bs_y),
            ris1_pos=(self.ris1_x, self.ris1_y),
            ris2_pos=(self.ris2_x, self.ris2_y),
            ulue_pos=(self.ulue_x, self.ulue_y),
            dlue_pos=(self.dlue_x, self.dlue_y),
            m_t=self.mt,
            m_r=self.mr,
            n1h=self.n1h,
            n1v=self.n1v,
            n2h=self.n2h,
            n2v=self.n2v,
            spacing=self.spacing,
        )

    def channel_params(self) -> ChannelParams:
        sc = SCENARIOS[self.scenario]
        return ChannelParams(
            fc_hz=self.fc_hz,
            bandwidth_hz=self.bandwidth_hz,
            noise_dbm_hz=self.noise_dbm_hz,
            beta_ia_db=self.beta_ia_db,
            beta_ui_db=self.beta_ui_db,
            alpha_ai=self.alpha_ai,
            alpha_iu=self.alpha_iu,
            alpha_au=sc["alpha_au"],
            alpha_r=sc["alpha_r"],
            alpha_u=sc["alpha_u"],
            sigma_aa2=self.sigma_aa2,
            doppler_hz=self.doppler_hz,
            step_interval_s=self.step_interval_s,
            p_u_max=self.p_u_max if self.p_u_max is not None else sc["p_u_max"],
            p_a_max=self.p_a_max if self.p_a_max is not None else sc["p_a_max"],
        )


# config-file key -> (field name, parser)
def _bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes", "on"):
        return True
    if s.lower() in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


_KEYMAP = {
    "scenario": ("scenario", str),
    "geometry.mt": ("mt", int),
    "geometry.mr": ("mr", int),
    "geometry.n1h": ("n1h", int),
    "geometry.n1v": ("n1v", int),
    "geometry.n2h": ("n2h", int),
    "geometry.n2v": ("n2v", int),
    "geometry.spacing": ("spacing", float),
    "geometry.bs_x": ("bs_x", float),
    "geometry.bs_y": ("bs_y", float),
    "geometry.ris1_x": ("ris1_x", float),
    "geometry.ris1_y": ("ris1_y", float),
    "geometry.ris2_x": ("ris2_x", float),
    "geometry.ris2_y": ("ris2_y", float),
    "geometry.ulue_x": ("ulue_x", float),
    "geometry.ulue_y": ("ulue_y", float),
    "geometry.dlue_x": ("dlue_x", float),
    "geometry.dlue_y": ("dlue_y", float),
    "channel.fc_hz": ("fc_hz", float),
    "channel.bandwidth_hz": ("bandwidth_hz", float),
    "channel.noise_dbm_hz": ("noise_dbm_hz", float),
    "channel.beta_ia_db": ("beta_ia_db", float),
    "channel.beta_ui_db": ("beta_ui_db", float),
    "channel.alpha_ai": ("alpha_ai", float),
    "channel.alpha_iu": ("alpha_iu", float),
    "channel.sigma_aa2": ("sigma_aa2", float),
    "channel.doppler_hz": ("doppler_hz", float),
    "channel.step_interval_s": ("step_interval_s", float),
    "channel.p_u_max": ("p_u_max", float),
    "channel.p_a_max": ("p_a_max", float),
    "env.delta": ("delta", float),
    "env.hsic_noise_var": ("hsic_noise_var", float),
    "env.mobility_speed": ("mobility_speed", float),
    "env.square_side": ("square_side", float),
    "agent.variant": ("variant", str),
    "agent.bits": ("bits", int),
    "agent.groups": ("groups", int),
    "agent.hidden": ("hidden", int),
    "agent.fe_layers": ("fe_layers", int),
    "agent.noise_sigma0": ("noise_sigma0", float),
    "agent.ou_theta": ("ou_theta", float),
    "agent.ou_sigma": ("ou_sigma", float),
    "agent.nmse_db": ("nmse_db", float),
    "agent.haa_noise_var": ("haa_noise_var", float),
    "agent.zero_inter_ris_csi": ("zero_inter_ris_csi", _bool),
    "train.gamma": ("gamma", float),
    "train.buffer_size": ("buffer_size", int),
    "train.batch_size": ("batch_size", int),
    "train.lambda": ("soft_lambda", float),
    "train.update_interval": ("update_interval", int),
    "train.lr_actor": ("lr_actor", float),
    "train.lr_critic": ("lr_critic", float),
    "run.episodes": ("episodes", int),
    "run.steps": ("steps", int),
    "run.runs": ("runs", int),
    "run.seed": ("seed", int),
    "run.out_dir": ("out_dir", str),
}

PROFILES = {
    "paper": dict(mt=10, mr=10, n1h=6, n1v=6, n2h=6, n2v=6, episodes=100, steps=1000, runs=8),
    "small": dict(mt=4, mr=4, n1h=4, n1v=4, n2h=4, n2v=4, episodes=30, steps=300, runs=4),
}


def _validate(cfg: ExperimentConfig):
    def check(cond, key, msg):
        if not cond:
            raise ConfigError(f"{key}: {msg}")

    check(cfg.scenario in SCENARIOS, "scenario", f"must be one of {sorted(SCENARIOS)}")
    check(cfg.variant in VARIANTS, "agent.variant", f"must be one of {VARIANTS}")
    check(0.0 <= cfg.gamma < 1.0, "train.gamma", "must be in [0, 1)")
    check(0.0 < cfg.soft_lambda <= 1.0, "train.lambda", "must be in (0, 1]")
    check(cfg.bits >= 1, "agent.bits", "must be >= 1")
    check(cfg.episodes >= 1, "run.episodes", "must be >= 1")
    check(cfg.steps >= 1, "run.steps", "must be >= 1")
    check(cfg.runs >= 1, "run.runs", "must be >= 1")
    check(0.0 <= cfg.delta <= 1.0, "env.delta", "must be in [0, 1]")
    check(cfg.batch_size >= 1, "train.batch_size", "must be >= 1")
    check(cfg.buffer_size >= cfg.batch_size, "train.buffer_size", "must hold a batch")
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, float):
            check(np.isfinite(v), f.name, "must be finite")
    if cfg.variant == "gp-msf-q-drl":
        from .agent import group_layout

        try:
            group_layout(cfg.n1h, cfg.n1v, cfg.groups)
            group_layout(cfg.n2h, cfg.n2v, cfg.groups)
        except ValueError as e:
            raise ConfigError(f"agent.groups: {e}") from e


def load_config(path=None, profile: str = None, text: str = None) -> ExperimentConfig:
    """Parse a config file (or raw text) on top of an optional profile."""
    cfg = ExperimentConfig()
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}")
        for k, v in PROFILES[profile].items():
            setattr(cfg, k, v)
    if text is None and path is not None:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    if text is not None:
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'section.key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _KEYMAP:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            attr, parse = _KEYMAP[key]
            try:
                setattr(cfg, attr, parse(value))
            except (ValueError, TypeError) as e:
                raise ConfigError(f"line {lineno}: bad value for {key}: {e}") from e
    _validate(cfg)
    return cfg


def config_echo_lines(cfg: ExperimentConfig) -> list:
    """Render the full effective config back to parseable lines."""
    lines = []
    for key, (attr, _) in _KEYMAP.items():
        v = getattr(cfg, attr)
        if v is None:
            continue
        lines.append(f"{key} = {v}")
    return lines
