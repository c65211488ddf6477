"""DDPG learner: multi-head actor, critic, replay buffer and update rules.

The actor is a shared feature extractor (dense + layer norm + ReLU) feeding
sub-networks for RIS phases (continuous tanh heads, or per-element softmax
heads on a quantized grid, optionally grouped), beamformer in-phase and
quadrature parts, and the two transmit powers.  The critic is a plain MLP
on the concatenated state and action.
"""

import copy
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .env import Action
from .errors import DimensionError
from .nnet import Adam, DenseLayer, LayerNorm, init_glorot, init_small_uniform

SMALL_INIT_BOUND = 3e-3


@dataclass
class TrainConfig:
    gamma: float = 0.6
    buffer_size: int = 10000
    batch_size: int = 64
    soft_lambda: float = 0.005
    update_interval: int = 1
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("discount must be in [0, 1)")
        if not 0.0 < self.soft_lambda <= 1.0:
            raise ValueError("soft update rate must be in (0, 1]")


@dataclass
class NoiseSchedule:
    """Exploration noise: linearly decaying Gaussian, or an OU process."""

    kind: str = "gaussian"  # gaussian | ou
    sigma0: float = 0.3
    horizon_episodes: int = 100
    ou_theta: float = 0.15
    ou_sigma: float = 0.3

    def sigma(self, episode: int) -> float:
        if self.kind != "gaussian":
            return self.ou_sigma
        frac = 1.0 - episode / max(self.horizon_episodes, 1)
        return self.sigma0 * max(frac, 0.0)


class OuProcess:
    """Zero-mean Ornstein-Uhlenbeck noise, one state per component."""

    def __init__(self, dim: int, theta: float, sigma: float, dt: float = 1.0):
        self.theta = theta
        self.sigma = sigma
        self.dt = dt
        self.state = np.zeros(dim)

    def sample(self, rng) -> np.ndarray:
        self.state = (
            self.state
            - self.theta * self.state * self.dt
            + self.sigma * np.sqrt(self.dt) * rng.standard_normal(self.state.shape)
        )
        return self.state.copy()

    def reset(self):
        self.state[:] = 0.0


# -- grouped phase layout --------------------------------------------------


def group_layout(nh: int, nv: int, m: int) -> np.ndarray:
    """Map each UPA element (row-major z*nh + x) to one of `m` rectangular
    blocks; block grid chosen as square as the panel divisors allow."""
    best = None
    for gh in range(1, m + 1):
        if m % gh:
            continue
        gv = m // gh
        if nh % gh == 0 and nv % gv == 0:
            if best is None or abs(gh - gv) < abs(best[0] - best[1]):
                best = (gh, gv)
    if best is None:
        raise ValueError(f"{m} groups cannot tile a {nh}x{nv} panel")
    gh, gv = best
    bh, bv = nh // gh, nv // gv
    idx = np.empty(nh * nv, dtype=int)
    for z in range(nv):
        for x in range(nh):
            idx[z * nh + x] = (z // bv) * gh + (x // bh)
    return idx


def group_expand(group_phases: np.ndarray, layout: np.ndarray) -> np.ndarray:
    """Broadcast per-group phases onto all elements of each block."""
    layout = np.asarray(layout)
    if layout.min() < 0 or layout.max() >= np.asarray(group_phases).shape[-1]:
        raise ValueError("layout references a nonexistent group")
    return np.asarray(group_phases)[..., layout]


def quantized_phase_select(probs: np.ndarray, n_bits: int) -> np.ndarray:
    """Per-element grid phase at the argmax probability (lowest-index ties)."""
    q = 2**n_bits
    if probs.shape[-1] != q:
        raise DimensionError(f"expected {q} probabilities per element")
    grid = 2.0 * np.pi / q * np.arange(q)
    return grid[np.argmax(probs, axis=-1)]


# -- networks --------------------------------------------------------------


class Actor:
    """Feature extractor plus per-quantity sub-network heads.

    Variants: "continuous" (tanh phase heads), "quantized" (softmax heads on
    a 2^n grid), "grouped" (quantized heads for group phases), "phases-only"
    (no beamformer heads; used by the closed-form CSI baselines).
    """

    def __init__(
        self,
        state_dim: int,
        n1: int,
        n2: int,
        m_t: int,
        m_r: int,
        rng,
        variant: str = "continuous",
        bits: int = 2,
        groups: int = 0,
        n1_panel=(6, 6),
        n2_panel=(6, 6),
        hidden: int = 100,
        n_layers: int = 2,
    ):
        if variant not in ("continuous", "quantized", "grouped", "phases-only"):
            raise ValueError(f"unknown actor variant {variant!r}")
        self.variant = variant
        self.state_dim = state_dim
        self.n1, self.n2, self.m_t, self.m_r = n1, n2, m_t, m_r
        self.bits = bits
        self.hidden = hidden
        self.layout1 = self.layout2 = None
        if variant == "grouped":
            self.groups = groups
            self.layout1 = group_layout(n1_panel[0], n1_panel[1], groups)
            self.layout2 = group_layout(n2_panel[0], n2_panel[1], groups)

        self.fe_layers = []
        self.fe_norms = []
        d = state_dim
        for _ in range(n_layers):
            self.fe_layers.append(init_glorot(hidden, d, rng))
            self.fe_norms.append(LayerNorm(hidden))
            d = hidden

        def last(d_out):
            return init_small_uniform(d_out, hidden, SMALL_INIT_BOUND, rng)

        q = 2**bits
        if variant == "continuous" or variant == "phases-only":
            self.sn_phase_u = last(n1)
            self.sn_phase_d = last(n2)
        elif variant == "quantized":
            self.sn_phase_u = last(n1 * q)
            self.sn_phase_d = last(n2 * q)
        else:  # grouped
            self.sn_phase_u = last(groups * q)
            self.sn_phase_d = last(groups * q)

        self.beam_heads = None
        if variant != "phases-only":
            # two dense layers (ReLU inner, tanh outer) per I/Q component
            self.beam_heads = {}
            for name, m in (
                ("wt_i", m_t),
                ("wt_q", m_t),
                ("wr_i", m_r),
                ("wr_q", m_r),
            ):
                self.beam_heads[name] = (
                    init_glorot(m, hidden, rng),
                    init_small_uniform(m, m, SMALL_INIT_BOUND, rng),
                )
        self.sn_p_a = last(1)
        self.sn_p_u = last(1)

    # parameter bookkeeping -----------------------------------------------

    def params(self):
        ps = []
        for layer, norm in zip(self.fe_layers, self.fe_norms):
            ps += layer.params() + norm.params()
        ps += self.sn_phase_u.params() + self.sn_phase_d.params()
        if self.beam_heads is not None:
            for name in ("wt_i", "wt_q", "wr_i", "wr_q"):
                l1, l2 = self.beam_heads[name]
                ps += l1.params() + l2.params()
        ps += self.sn_p_a.params() + self.sn_p_u.params()
        return ps

    def clone(self):
        return copy.deepcopy(self)

    # forward ---------------------------------------------------------------

    def forward(self, states) -> dict:
        """Raw head outputs as autodiff Vars; `states` is (batch, state_dim)."""
        x = states if isinstance(states, Var) else Var(np.atleast_2d(states))
        if x.value.shape[-1] != self.state_dim:
            raise DimensionError(
                f"state width {x.value.shape[-1]} != expected {self.state_dim}"
            )
        for layer, norm in zip(self.fe_layers, self.fe_norms):
            x = ad.relu(norm(layer(x)))
        heads = {}
        if self.variant in ("continuous", "phases-only"):
            heads["phase_u"] = ad.tanh(self.sn_phase_u(x))
            heads["phase_d"] = ad.tanh(self.sn_phase_d(x))
        else:
            q = 2**self.bits
            b = x.value.shape[0]
            for key, sn in (("phase_u", self.sn_phase_u), ("phase_d", self.sn_phase_d)):
                logits = sn(x)
                n = logits.value.shape[-1] // q
                heads[key] = ad.softmax(ad.reshape(logits, (b, n, q)), axis=-1)
        if self.beam_heads is not None:
            for name in ("wt_i", "wt_q", "wr_i", "wr_q"):
                l1, l2 = self.beam_heads[name]
                heads[name] = ad.tanh(l2(ad.relu(l1(x))))
        heads["p_a"] = ad.tanh(self.sn_p_a(x))
        heads["p_u"] = ad.tanh(self.sn_p_u(x))
        return heads

    # action assembly -------------------------------------------------------

    def phase_grid(self) -> np.ndarray:
        q = 2**self.bits
        return 2.0 * np.pi / q * np.arange(q)

    def select_phases_np(self, probs: np.ndarray, which: int) -> np.ndarray:
        """Quantized/grouped head values -> per-element phases (batch, n)."""
        theta = quantized_phase_select(probs, self.bits)
        if self.variant == "grouped":
            layout = self.layout1 if which == 1 else self.layout2
            theta = group_expand(theta, layout)
        return theta

    def scale_batch(self, head_values: dict, p_a_max, p_u_max) -> np.ndarray:
        """Numpy path: noisy/raw head values -> flattened env actions."""
        if self.variant in ("continuous", "phases-only"):
            th_u = np.pi * (head_values["phase_u"] + 1.0)
            th_d = np.pi * (head_values["phase_d"] + 1.0)
        else:
            th_u = self.select_phases_np(head_values["phase_u"], 1)
            th_d = self.select_phases_np(head_values["phase_d"], 2)
        th_u = np.mod(th_u, 2.0 * np.pi)
        th_d = np.mod(th_d, 2.0 * np.pi)
        p_a = (head_values["p_a"] + 1.0) / 2.0 * p_a_max
        p_u = (head_values["p_u"] + 1.0) / 2.0 * p_u_max
        if self.variant == "phases-only":
            return np.concatenate([th_u, th_d, p_a, p_u], axis=-1)

        def unitize(i_part, q_part):
            w = np.concatenate([i_part, q_part], axis=-1)
            norm = np.linalg.norm(w, axis=-1, keepdims=True)
            degenerate = norm[..., 0] < 1e-12
            if np.any(degenerate):
                w = w.copy()
                w[degenerate] = 0.0
                w[degenerate, 0] = 1.0  # first-basis fallback
                norm = np.linalg.norm(w, axis=-1, keepdims=True)
            return w / norm

        wt = unitize(head_values["wt_i"], head_values["wt_q"])
        wr = unitize(head_values["wr_i"], head_values["wr_q"])
        return np.concatenate([th_u, th_d, wt, wr, p_a, p_u], axis=-1)

    def scale_var(self, heads: dict, p_a_max, p_u_max) -> Var:
        """Differentiable path used by the policy-gradient update.

        Quantized/grouped phases use a straight-through convention: forward
        emits the selected grid angles, the gradient flows through the
        probability-weighted soft angle (softmax Jacobian included).
        """
        if self.variant in ("continuous", "phases-only"):
            th_u = (heads["phase_u"] + 1.0) * np.pi
            th_d = (heads["phase_d"] + 1.0) * np.pi
        else:
            grid = self.phase_grid()
            parts = []
            for key, which in (("phase_u", 1), ("phase_d", 2)):
                p = heads[key]  # (b, n, q)
                soft = ad.vsum(p * grid, axis=-1)
                hard = self.select_phases_np(p.value, which)
                if self.variant == "grouped":
                    layout = self.layout1 if which == 1 else self.layout2
                    soft = soft[:, layout]
                parts.append(ad.straight_through(hard, soft))
            th_u, th_d = parts
        p_a = (heads["p_a"] + 1.0) * (0.5 * p_a_max)
        p_u = (heads["p_u"] + 1.0) * (0.5 * p_u_max)
        if self.variant == "phases-only":
            return ad.concat([th_u, th_d, p_a, p_u], axis=-1)

        def unitize(i_part, q_part):
            w = ad.concat([i_part, q_part], axis=-1)
            norm = ad.sqrt(ad.vsum(w * w, axis=-1, keepdims=True) + 1e-24)
            soft = w / norm
            # forward must match the numpy path exactly, including the
            # first-basis fallback for an all-zero head; gradient keeps the
            # smooth normalization
            raw = np.concatenate([i_part.value, q_part.value], axis=-1)
            n = np.linalg.norm(raw, axis=-1, keepdims=True)
            degenerate = n[..., 0] < 1e-12
            if np.any(degenerate):
                raw = raw.copy()
                raw[degenerate] = 0.0
                raw[degenerate, 0] = 1.0
                n = np.linalg.norm(raw, axis=-1, keepdims=True)
            return ad.straight_through(raw / n, soft)

        wt = unitize(heads["wt_i"], heads["wt_q"])
        wr = unitize(heads["wr_i"], heads["wr_q"])
        return ad.concat([th_u, th_d, wt, wr, p_a, p_u], axis=-1)

    def action_dim(self) -> int:
        if self.variant == "phases-only":
            return self.n1 + self.n2 + 2
        return Action.flat_dim(self.n1, self.n2, self.m_t, self.m_r)

    def noise_head_names(self):
        """Heads that receive exploration noise (powers excluded)."""
        names = ["phase_u", "phase_d"]
        if self.beam_heads is not None:
            names += ["wt_i", "wt_q", "wr_i", "wr_q"]
        return names


class Critic:
    """MLP Q(s, a): two hidden ReLU layers, scalar output."""

    def __init__(self, state_dim, action_dim, rng, hidden=100, n_layers=2):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.layers = []
        d = state_dim + action_dim
        for _ in range(n_layers):
            self.layers.append(init_glorot(hidden, d, rng))
            d = hidden
        self.out = init_small_uniform(1, d, SMALL_INIT_BOUND, rng)

    def forward(self, states, actions) -> Var:
        s = states if isinstance(states, Var) else Var(np.atleast_2d(states))
        a = actions if isinstance(actions, Var) else Var(np.atleast_2d(actions))
        x = ad.concat([s, a], axis=-1)
        for layer in self.layers:
            x = ad.relu(layer(x))
        return self.out(x)

    def params(self):
        ps = []
        for layer in self.layers:
            ps += layer.params()
        return ps + self.out.params()

    def clone(self):
        return copy.deepcopy(self)


# -- replay buffer ---------------------------------------------------------


class ReplayBuffer:
    """Bounded FIFO ring of (state, action, reward, next state)."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.head = 0
        self.size = 0

    def push(self, state, action, reward, next_state):
        i = self.head
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ready(self, batch_size: int) -> bool:
        return self.size >= batch_size

    def sample(self, batch_size: int, rng):
        if not self.ready(batch_size):
            raise ValueError("buffer smaller than requested batch")
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return (
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
        )

    def contents(self):
        """Experiences oldest-first (test/introspection helper)."""
        if self.size < self.capacity:
            order = np.arange(self.size)
        else:
            order = np.roll(np.arange(self.capacity), -self.head)
        return (
            self.states[order],
            self.actions[order],
            self.rewards[order],
            self.next_states[order],
        )


# -- the learner -----------------------------------------------------------


@dataclass
class UpdateStats:
    critic_loss: float = 0.0
    actor_objective: float = 0.0
    updates: int = 0


class DdpgAgent:
    """Actor-critic learner with target networks and soft updates."""

    def __init__(
        self,
        actor: Actor,
        state_dim: int,
        p_a_max: float,
        p_u_max: float,
        rng,
        train: TrainConfig = None,
        noise: NoiseSchedule = None,
        critic_hidden: int = 100,
    ):
        self.train = train or TrainConfig()
        self.noise = noise or NoiseSchedule()
        self.rng = rng
        self.actor = actor
        self.p_a_max = p_a_max
        self.p_u_max = p_u_max
        self.critic = Critic(state_dim, actor.action_dim(), rng, hidden=critic_hidden)
        self.actor_target = actor.clone()
        self.critic_target = self.critic.clone()
        self.opt_actor = Adam(self.actor.params(), self.train.lr_actor)
        self.opt_critic = Adam(self.critic.params(), self.train.lr_critic)
        self.buffer = ReplayBuffer(
            self.train.buffer_size, state_dim, actor.action_dim()
        )
        self.step_count = 0
        self.ou = None
        if self.noise.kind == "ou":
            dim = sum(
                np.prod(self._head_shape(n)) for n in self.actor.noise_head_names()
            )
            self.ou = OuProcess(int(dim), self.noise.ou_theta, self.noise.ou_sigma)

    def _head_shape(self, name):
        a = self.actor
        q = 2**a.bits
        if name in ("phase_u", "phase_d"):
            if a.variant in ("continuous", "phases-only"):
                return (a.n1 if name == "phase_u" else a.n2,)
            if a.variant == "quantized":
                return (a.n1 if name == "phase_u" else a.n2, q)
            return (a.groups, q)
        m = a.m_t if name.startswith("wt") else a.m_r
        return (m,)

    # acting ----------------------------------------------------------------

    def act(self, state: np.ndarray, episode: int = 0, greedy: bool = False):
        """One flattened action for `state`; exploration noise unless greedy."""
        heads = self.actor.forward(state.reshape(1, -1))
        values = {k: v.value.copy() for k, v in heads.items()}
        if not greedy:
            sigma = self.noise.sigma(episode)
            if self.noise.kind == "ou" and self.ou is not None:
                noise_flat = self.ou.sample(self.rng)
                off = 0
                for name in self.actor.noise_head_names():
                    shape = self._head_shape(name)
                    k = int(np.prod(shape))
                    values[name] = values[name] + noise_flat[off : off + k].reshape(
                        (1,) + shape
                    )
                    off += k
            elif sigma > 0.0:
                for name in self.actor.noise_head_names():
                    values[name] = values[name] + self.rng.normal(
                        0.0, sigma, size=values[name].shape
                    )
            for name in self.actor.noise_head_names():
                values[name] = np.clip(values[name], -1.0, 1.0)
        flat = self.actor.scale_batch(values, self.p_a_max, self.p_u_max)[0]
        return flat

    def env_action(self, flat: np.ndarray) -> Action:
        a = self.actor
        return Action.unflatten(flat, a.n1, a.n2, a.m_t, a.m_r)

    # learning --------------------------------------------------------------

    def observe(self, state, action_flat, reward, next_state):
        self.buffer.push(state, action_flat, reward, next_state)

    def compute_targets(self, rewards, next_states) -> np.ndarray:
        heads = self.actor_target.forward(next_states)
        values = {k: v.value for k, v in heads.items()}
        next_actions = self.actor_target.scale_batch(
            values, self.p_a_max, self.p_u_max
        )
        q_next = self.critic_target.forward(next_states, next_actions).value[:, 0]
        return rewards + self.train.gamma * q_next

    def update_critic(self, states, actions, targets) -> float:
        q = self.critic.forward(states, actions)
        err = q - targets.reshape(-1, 1)
        loss = ad.vmean(err * err)
        loss.backward()
        self.opt_critic.step()
        return float(loss.value)

    def update_actor(self, states) -> float:
        heads = self.actor.forward(Var(states))
        aflat = self.actor.scale_var(heads, self.p_a_max, self.p_u_max)
        q = self.critic.forward(Var(states), aflat)
        objective = ad.vmean(q)
        neg = objective * (-1.0)
        neg.backward()
        self.opt_actor.step()
        return float(objective.value)

    def soft_update(self):
        lam = self.train.soft_lambda
        for p, t in zip(self.actor.params(), self.actor_target.params()):
            t.value = lam * p.value + (1.0 - lam) * t.value
        for p, t in zip(self.critic.params(), self.critic_target.params()):
            t.value = lam * p.value + (1.0 - lam) * t.value

    def update(self) -> UpdateStats:
        stats = UpdateStats()
        if not self.buffer.ready(self.train.batch_size):
            return stats
        s, a, r, s2 = self.buffer.sample(self.train.batch_size, self.rng)
        y = self.compute_targets(r, s2)
        stats.critic_loss = self.update_critic(s, a, y)
        stats.actor_objective = self.update_actor(s)
        self.step_count += 1
        if self.step_count % self.train.update_interval == 0:
            self.soft_update()
        stats.updates = 1
        return stats

    # checkpointing ---------------------------------------------------------

    def state_tensors(self) -> dict:
        out = {}
        groups = {
            "actor": self.actor.params(),
            "actor_tgt": self.actor_target.params(),
            "critic": self.critic.params(),
            "critic_tgt": self.critic_target.params(),
        }
        for prefix, params in groups.items():
            for i, p in enumerate(params):
                out[f"{prefix}/p{i}"] = p.value
        out.update(self.opt_actor.state_tensors("adam_a"))
        out.update(self.opt_critic.state_tensors("adam_c"))
        t = self.train
        out["config/train"] = np.array(
            [
                t.gamma,
                t.buffer_size,
                t.batch_size,
                t.soft_lambda,
                t.update_interval,
                t.lr_actor,
                t.lr_critic,
            ]
        )
        return out

    def load_state_tensors(self, tensors: dict):
        groups = {
            "actor": self.actor.params(),
            "actor_tgt": self.actor_target.params(),
            "critic": self.critic.params(),
            "critic_tgt": self.critic_target.params(),
        }
        for prefix, params in groups.items():
            for i, p in enumerate(params):
                p.value = tensors[f"{prefix}/p{i}"].reshape(p.value.shape).copy()
        self.opt_actor.load_state_tensors("adam_a", tensors)
        self.opt_critic.load_state_tensors("adam_c", tensors)
