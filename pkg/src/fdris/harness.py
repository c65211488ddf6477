"""Experiment driver: multi-run training, greedy CDF evaluation, feedback
overhead accounting, and a quick numerical self-test.

Each training run gets its own random stream derived from (master seed,
run index), writes one metrics CSV and one checkpoint, and the driver
finishes by averaging the per-episode metrics across runs.
"""

import csv
import os
import time

import numpy as np

from . import checkpoint as ckpt
from .agent import Actor, DdpgAgent, NoiseSchedule, TrainConfig
from .baselines import corrupt_csi, csi_env_action, randpsbf_action
from .config import ExperimentConfig, config_echo_lines
from .env import FdRisEnv

METRIC_FIELDS = ("run", "episode", "mean_rate_bs", "mean_rate_dl", "mean_reward",
                 "exploration_sigma", "wall_ms")

FLOAT_FEEDBACK_BITS = 64  # per unquantized phase coefficient


def run_rng(master_seed: int, run_index: int):
    """Independent generator for one run of a multi-run experiment."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, run_index]))


def _variant_uses_csi(variant: str) -> bool:
    return variant in ("perfcsi", "noiscsi")


def build_env(cfg: ExperimentConfig, rng) -> FdRisEnv:
    si = "lssic"
    if cfg.variant == "msf-drl-hsic":
        si = "hsic"
    position_state = cfg.variant == "msf-drl-pos"
    speed = cfg.mobility_speed
    if position_state and speed == 0.0:
        speed = 1.0  # position features only matter with mobile users
    return FdRisEnv(
        cfg.geometry(),
        cfg.channel_params(),
        rng,
        si_method=si,
        delta=cfg.delta,
        hsic_noise_var=cfg.hsic_noise_var,
        position_state=position_state,
        mobility_speed=speed,
        square_side=cfg.square_side,
    )


def build_agent(cfg: ExperimentConfig, env: FdRisEnv, rng) -> DdpgAgent:
    if cfg.variant == "randpsbf":
        raise ValueError("randpsbf has no learner")
    g = env.geom
    if cfg.variant == "msf-q-drl":
        actor_variant = "quantized"
    elif cfg.variant == "gp-msf-q-drl":
        actor_variant = "grouped"
    elif _variant_uses_csi(cfg.variant):
        actor_variant = "phases-only"
    else:
        actor_variant = "continuous"
    actor = Actor(
        env.state_dim,
        g.n1,
        g.n2,
        g.m_t,
        g.m_r,
        rng,
        variant=actor_variant,
        bits=cfg.bits,
        groups=cfg.groups,
        n1_panel=(g.n1h, g.n1v),
        n2_panel=(g.n2h, g.n2v),
        hidden=cfg.hidden,
        n_layers=cfg.fe_layers,
    )
    noise = NoiseSchedule(
        kind="ou" if cfg.variant == "oupsbf" else "gaussian",
        sigma0=cfg.noise_sigma0,
        horizon_episodes=cfg.episodes,
        ou_theta=cfg.ou_theta,
        ou_sigma=cfg.ou_sigma,
    )
    train = TrainConfig(
        gamma=cfg.gamma,
        buffer_size=cfg.buffer_size,
        batch_size=cfg.batch_size,
        soft_lambda=cfg.soft_lambda,
        update_interval=cfg.update_interval,
        lr_actor=cfg.lr_actor,
        lr_critic=cfg.lr_critic,
    )
    return DdpgAgent(
        actor,
        env.state_dim,
        env.params.p_a_max,
        env.params.p_u_max,
        rng,
        train=train,
        noise=noise,
        critic_hidden=cfg.hidden,
    )


def _csi_step(env: FdRisEnv, cfg: ExperimentConfig, agent_flat, rng):
    """Step the environment with MRC/ZF beamformers built from current CSI."""
    g = env.geom

    def make_action(channels):
        view = corrupt_csi(
            channels,
            rng,
            nmse_db=None if cfg.variant == "perfcsi" else cfg.nmse_db,
            haa_noise_var=0.0 if cfg.variant == "perfcsi" else cfg.haa_noise_var,
            zero_inter_ris=cfg.zero_inter_ris_csi,
        )
        return csi_env_action(agent_flat, view, g.n1, g.n2)

    return env.step(make_action)


def run_one_training(cfg: ExperimentConfig, run_index: int, episode_hook=None):
    """Train a single run; returns (metric rows, agent-or-None)."""
    rng = run_rng(cfg.seed, run_index)
    env = build_env(cfg, rng)
    agent = None if cfg.variant == "randpsbf" else build_agent(cfg, env, rng)
    rows = []
    for episode in range(cfg.episodes):
        t0 = time.perf_counter()
        state = env.reset()
        sum_bs = sum_dl = sum_r = 0.0
        for _ in range(cfg.steps):
            if agent is None:
                act = randpsbf_action(env.geom, env.params.p_a_max,
                                      env.params.p_u_max, rng)
                out = env.step(act)
            elif _variant_uses_csi(cfg.variant):
                flat = agent.act(state, episode)
                out = _csi_step(env, cfg, flat, rng)
                agent.observe(state, flat, out.reward, out.next_state)
                agent.update()
            else:
                flat = agent.act(state, episode)
                out = env.step(agent.env_action(flat))
                agent.observe(state, flat, out.reward, out.next_state)
                agent.update()
            state = out.next_state
            sum_bs += out.r_bs
            sum_dl += out.r_dl
            sum_r += out.reward
        sigma = agent.noise.sigma(episode) if agent is not None else 0.0
        rows.append({
            "run": run_index,
            "episode": episode,
            "mean_rate_bs": sum_bs / cfg.steps,
            "mean_rate_dl": sum_dl / cfg.steps,
            "mean_reward": sum_r / cfg.steps,
            "exploration_sigma": sigma,
            "wall_ms": (time.perf_counter() - t0) * 1e3,
        })
        if episode_hook is not None:
            episode_hook(run_index, rows[-1])
    return rows, agent


def _write_rows(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=METRIC_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def average_rows(all_rows):
    """Average per-episode metrics over runs (run column becomes -1)."""
    by_episode = {}
    for rows in all_rows:
        for r in rows:
            by_episode.setdefault(r["episode"], []).append(r)
    out = []
    for ep in sorted(by_episode):
        group = by_episode[ep]
        row = {"run": -1, "episode": ep}
        for k in METRIC_FIELDS[2:]:
            row[k] = float(np.mean([g[k] for g in group]))
        out.append(row)
    return out


def run_training(cfg: ExperimentConfig, out_dir=None, episode_hook=None):
    """Run `cfg.runs` independent trainings, writing CSVs and checkpoints."""
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w") as f:
        f.write("\n".join(config_echo_lines(cfg)) + "\n")
    all_rows = []
    for run_index in range(cfg.runs):
        rows, agent = run_one_training(cfg, run_index, episode_hook=episode_hook)
        all_rows.append(rows)
        _write_rows(os.path.join(out_dir, f"run{run_index}.csv"), rows)
        if agent is not None:
            ckpt.save_tensors(
                os.path.join(out_dir, f"run{run_index}.ckpt"),
                agent.state_tensors(),
            )
    avg = average_rows(all_rows)
    _write_rows(os.path.join(out_dir, "average.csv"), avg)
    return all_rows, avg


def run_cdf_eval(cfg: ExperimentConfig, checkpoint_path, episodes=10, steps=None,
                 run_index=0):
    """Greedy-policy evaluation; returns the sorted per-step rewards."""
    steps = steps or cfg.steps
    rng = run_rng(cfg.seed, cfg.runs + run_index)  # fresh stream, not a training one
    env = build_env(cfg, rng)
    agent = build_agent(cfg, env, rng)
    agent.load_state_tensors(ckpt.load_tensors(checkpoint_path))
    rewards = []
    for _ in range(episodes):
        state = env.reset()
        for _ in range(steps):
            flat = agent.act(state, greedy=True)
            if _variant_uses_csi(cfg.variant):
                out = _csi_step(env, cfg, flat, rng)
            else:
                out = env.step(agent.env_action(flat))
            state = out.next_state
            rewards.append(out.reward)
    rewards = np.sort(np.asarray(rewards))
    return rewards


def write_cdf(path, rewards: np.ndarray):
    n = rewards.size
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["reward", "cdf"])
        for i, v in enumerate(rewards):
            w.writerow([f"{v:.10g}", f"{(i + 1) / n:.10g}"])


def signaling_bits(variant: str, n1: int, n2: int, bits: int = 2,
                   groups: int = 9) -> int:
    """Per-step phase feedback from BS to the RIS controllers."""
    from .config import VARIANTS

    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "msf-q-drl":
        return bits * (n1 + n2)
    if variant == "gp-msf-q-drl":
        return bits * 2 * groups  # one codeword per group, both panels
    return FLOAT_FEEDBACK_BITS * (n1 + n2)


def selftest():
    """Fast numerical sanity checks; returns a list of (name, ok, detail)."""
    from . import autodiff as ad
    from .autodiff import Var
    from .env import lssic_estimate, random_action
    from .channel import FadingState, realize_channels

    results = []
    cfg = ExperimentConfig(mt=4, mr=4, n1h=4, n1v=4, n2h=4, n2v=4)
    geom, params = cfg.geometry(), cfg.channel_params()
    rng = np.random.default_rng(12345)

    # least-squares SI estimate is exact when the receiver is noiseless
    fading = FadingState(geom, params.doppler_hz, params.step_interval_s, rng)
    chans = realize_channels(geom, params, fading, rng)
    act = random_action(geom, params.p_a_max, params.p_u_max, rng)
    est = lssic_estimate(chans, act, 0.0, rng)
    truth = complex((act.w_r @ chans.H_AA @ act.w_t)[0, 0])
    err = abs(est.h_hat - truth)
    results.append(("noiseless SI estimate exact", err < 1e-12, f"err={err:.3g}"))

    # reverse-mode gradient matches central finite differences
    x0 = rng.standard_normal((3, 5))
    w0 = rng.standard_normal((5, 2))
    x = Var(x0.copy())
    y = ad.vsum(ad.tanh(x @ Var(w0)) ** 2)
    y.backward()
    g_ad = x.grad.copy()
    eps = 1e-6
    i, j = 1, 3
    def f(v):
        xp = x0.copy()
        xp[i, j] = v
        return float(ad.vsum(ad.tanh(Var(xp) @ Var(w0)) ** 2).value)
    g_fd = (f(x0[i, j] + eps) - f(x0[i, j] - eps)) / (2 * eps)
    gerr = abs(g_ad[i, j] - g_fd)
    results.append(("autodiff matches finite difference", gerr < 1e-6,
                    f"err={gerr:.3g}"))

    # checkpoint round trip is bit exact
    import tempfile
    tensors = {"a": rng.standard_normal((4, 3)), "b": np.arange(5.0)}
    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "t.ckpt")
        ckpt.save_tensors(p, tensors)
        back = ckpt.load_tensors(p)
    ok = all(np.array_equal(tensors[k], back[k]) for k in tensors)
    results.append(("checkpoint round trip exact", ok, ""))

    # unitized beamformers from the actor are unit norm
    env = build_env(cfg, rng)
    agent = build_agent(cfg, env, rng)
    state = env.reset()
    a = agent.env_action(agent.act(state, 0))
    n1 = abs(np.linalg.norm(a.w_t) - 1.0)
    n2 = abs(np.linalg.norm(a.w_r) - 1.0)
    results.append(("actor beamformers unit norm", max(n1, n2) < 1e-9,
                    f"dev={max(n1, n2):.3g}"))
    return results
