"""Scripted synthetic basketball plays with ground-truth tactic labels.

Team 0 attacks the basket at ``(+12.7, 0)`` and team 1 defends it.  Each
team follows a motion script chosen by its tactic for the observed frames and
may switch to a different script from the first future frame onward.  Eight
vocabulary entries have scripts; the other ids stay legal but unused.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .numeric import SeededRng
from .scenes import BALL_TEAM, DatasetConfig, Scene, TacticVocabulary, TeamTactics

SCRIPTED_OFFENSE = ("pick_and_roll", "ball_movement", "fast_break", "single")
SCRIPTED_DEFENSE = ("zone_2_3", "man_to_man", "defensive_transition", "scramble")

BASKET = np.array([12.7, 0.0])
SPOTS = np.array([[6.8, 0.0], [8.6, 5.0], [8.6, -5.0], [12.4, 6.4], [12.4, -6.4]])
FAST_BREAK_LANES = np.array([[11.6, 0.0], [10.6, 3.4], [10.6, -3.4], [8.2, 5.6], [8.2, -5.6]])
ZONE_ANCHORS = np.array([[10.6, 2.3], [10.6, -2.3], [12.3, 4.6], [12.3, -4.6], [12.4, 0.0]])
PAINT_ANCHORS = np.array([[11.4, 1.6], [11.4, -1.6], [9.8, 3.0], [9.8, -3.0], [12.3, 0.0]])


@dataclass(frozen=True)
class SynthConfig:
    sigma_pos: float = 0.3  # additive observation noise, metres
    p_switch: float = 0.3  # chance a team changes tactic at frame 0
    process_noise: float = 0.04
    player_speed: float = 7.0  # m/s cap
    # a switch favours the next tactic of the side's list: weights decay^(d-1) by cyclic distance d
    switch_decay: float = 0.5


def scripted_ids(vocab: TacticVocabulary) -> list[int]:
    return [vocab.id_of(n) for n in SCRIPTED_OFFENSE + SCRIPTED_DEFENSE]


def default_tactic_mix(vocab: TacticVocabulary) -> dict[int, float]:
    ids = scripted_ids(vocab)
    return {i: 1.0 / len(ids) for i in ids}


def _normalise_mix(mix, vocab: TacticVocabulary) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(mix, Mapping):
        w = np.zeros(vocab.size)
        for k, v in mix.items():
            w[vocab.check(int(k))] = float(v)
    else:
        w = np.asarray(mix, dtype=np.float64)
        if w.shape != (vocab.size,):
            raise ArgumentError(f"tactic mix must have {vocab.size} entries, got shape {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ArgumentError("tactic mix weights must be finite and non-negative")
    if np.count_nonzero(w) < 2:
        raise ArgumentError("tactic mix needs at least two nonzero entries")
    scripted = set(scripted_ids(vocab))
    unscripted = [vocab.entries[i].name for i in np.flatnonzero(w) if i not in scripted]
    if unscripted:
        raise ArgumentError(f"no motion script for tactics {unscripted}")
    off = np.array([w[i] if vocab.entries[i].side == "offense" else 0.0 for i in range(vocab.size)])
    de = w - off
    if off.sum() == 0 or de.sum() == 0:
        raise ArgumentError("tactic mix needs weight on both offensive and defensive tactics")
    return off / off.sum(), de / de.sum()


def _step_towards(pos, target, max_step, gain=0.55):
    delta = (target - pos) * gain
    norm = np.linalg.norm(delta, axis=-1, keepdims=True)
    factor = np.minimum(1.0, max_step / np.maximum(norm, 1e-12))
    return pos + delta * factor


def _unit(v):
    return v / np.maximum(np.linalg.norm(v, axis=-1, keepdims=True), 1e-9)


class _Play:
    """Mutable simulation state for one scene."""

    def __init__(self, rng: SeededRng, n_players: int, frames: int, dt: float, cfg: SynthConfig):
        self.rng = rng
        self.n = n_players
        self.frames = frames
        self.dt = dt
        self.cfg = cfg
        self.off = np.zeros((n_players, 2))
        self.de = np.zeros((n_players, 2))
        self.holder = 0
        self.flight = None  # (from, to, frames elapsed)
        self.ball = np.zeros(2)
        self.spots = SPOTS[: n_players].copy()
        self.off_plan: dict = {}
        self.def_plan: dict = {}

    # ---- initial layout -------------------------------------------------
    def init_offense(self, tactic: str):
        rng = self.rng
        n = self.n
        if tactic == "fast_break":
            lanes_y = np.linspace(-5.0, 5.0, n)
            self.off[:, 0] = rng.uniform(-11.0, -5.0, n)
            self.off[:, 1] = lanes_y + rng.normal(n) * 0.6
        else:
            order = rng.permutation(n)
            self.spots = SPOTS[order % len(SPOTS)] + rng.normal((n, 2)) * 0.5
            self.off = self.spots + rng.normal((n, 2)) * 0.6
        self.holder = int(np.argmin(np.abs(self.off[:, 1]) + 0.3 * np.abs(self.off[:, 0] - 6.8)))
        self.ball = self.off[self.holder].copy()

    def init_defense(self, tactic: str):
        rng = self.rng
        n = self.n
        if tactic == "zone_2_3":
            self.de = ZONE_ANCHORS[:n] + rng.normal((n, 2)) * 0.5
        elif tactic == "defensive_transition":
            self.de = self.off + np.array([-2.5, 0.0]) + rng.normal((n, 2)) * 1.2
        elif tactic == "scramble":
            self.de = self.off + rng.normal((n, 2)) * 1.8
        else:
            self.de = self.off + 1.0 * _unit(BASKET - self.off) + rng.normal((n, 2)) * 0.4

    # ---- segment plans --------------------------------------------------
    def plan_offense(self, tactic: str):
        rng = self.rng
        others = [i for i in range(self.n) if i != self.holder]
        side = 1.0 if rng.uniform() < 0.5 else -1.0
        plan = {"tactic": tactic, "tau": 0, "side": side}
        if tactic == "pick_and_roll":
            plan["screener"] = int(rng.choice(others))
            plan["pass_at"] = int(rng.integers(8, 14)) if rng.uniform() < 0.5 else None
        elif tactic == "ball_movement":
            plan["period"] = int(rng.integers(3, 5))
            plan["cuts"] = self.spots + rng.normal((self.n, 2)) * 0.8
        elif tactic == "fast_break":
            order = np.argsort(np.argsort(-self.off[:, 1]))
            lanes = FAST_BREAK_LANES[np.argsort(-FAST_BREAK_LANES[:, 1])]
            plan["targets"] = lanes[order] + rng.normal((self.n, 2)) * 0.4
        elif tactic == "single":
            plan["finish"] = BASKET + np.array([-0.6, side * rng.uniform(0.2, 1.2)])
            plan["speed"] = rng.uniform(4.5, 6.5)
        self.off_plan = plan

    def plan_defense(self, tactic: str):
        rng = self.rng
        plan = {"tactic": tactic, "tau": 0}
        if tactic == "zone_2_3":
            cost = np.linalg.norm(self.de[:, None, :] - ZONE_ANCHORS[None, : self.n], axis=-1)
            assign = -np.ones(self.n, dtype=int)
            free = set(range(self.n))
            for d in np.argsort(cost.min(axis=1)):
                a = min(free, key=lambda j: cost[d, j])
                assign[d] = a
                free.remove(a)
            plan["anchors"] = ZONE_ANCHORS[assign] + rng.normal((self.n, 2)) * 0.3
        elif tactic == "defensive_transition":
            plan["anchors"] = PAINT_ANCHORS[rng.permutation(self.n)]
        elif tactic == "scramble":
            plan["targets"] = None
        self.def_plan = plan

    # ---- per-frame targets ----------------------------------------------
    def _pass(self, to: int):
        if to != self.holder and self.flight is None:
            self.flight = (self.holder, to, 0)

    def offense_step(self):
        p = self.off_plan
        tau = p["tau"]
        rng = self.rng
        tgt = self.off.copy()
        speed = np.full(self.n, 3.0)
        t = p["tactic"]
        if t == "pick_and_roll":
            h, s, side = self.holder, p["screener"], p["side"]
            if tau < 5:
                tgt[s] = self.off[h] + 0.9 * _unit(BASKET - self.off[h]) + np.array([0.0, side * 0.7])
                tgt[h] = self.off[h] + np.array([0.3, 0.0])
                speed[s] = 5.5
            else:
                tgt[h] = np.array([10.2, side * 2.6])
                tgt[s] = np.array([11.8, -side * 1.0])
                speed[h], speed[s] = 5.0, 5.5
            for i in range(self.n):
                if i not in (h, s):
                    tgt[i] = self.spots[i]
            if p["pass_at"] is not None and tau == p["pass_at"]:
                self._pass(s)
        elif t == "ball_movement":
            if tau % p["period"] == 0 and tau > 0:
                choices = [i for i in range(self.n) if i != self.holder]
                self._pass(int(rng.choice(choices)))
                mover = int(rng.integers(self.n))
                p["cuts"][mover] = self.spots[mover] + rng.normal(2) * 1.2
            tgt = p["cuts"].copy()
            speed[:] = 3.5
        elif t == "fast_break":
            tgt = p["targets"].copy()
            speed[:] = self.cfg.player_speed
            speed[self.holder] = self.cfg.player_speed * 0.95
        elif t == "single":
            h = self.holder
            tgt[h] = p["finish"]
            speed[h] = p["speed"]
        p["tau"] = tau + 1
        self.off = self._move(self.off, tgt, speed, gain=0.6 if t != "single" else 0.8)

    def defense_step(self):
        p = self.def_plan
        t = p["tactic"]
        rng = self.rng
        speed = np.full(self.n, 5.0)
        if t == "man_to_man":
            tgt = self.off + 1.0 * _unit(BASKET - self.off) + rng.normal((self.n, 2)) * 0.25
            speed[:] = self.cfg.player_speed
            gain = 0.85
        elif t == "zone_2_3":
            tgt = p["anchors"] + 0.15 * (self.ball - p["anchors"])
            speed[:] = 3.0
            gain = 0.5
        elif t == "defensive_transition":
            tgt = p["anchors"]
            speed[:] = self.cfg.player_speed
            gain = 0.6
        else:  # scramble
            if p["targets"] is None or p["tau"] % 3 == 0:
                picks = rng.integers(self.n, size=self.n)
                targets = self.off[picks] + rng.normal((self.n, 2)) * 1.5
                trap = np.argsort(np.linalg.norm(self.de - self.ball, axis=-1))[:2]
                targets[trap] = self.ball + rng.normal((2, 2)) * 0.5
                p["targets"] = targets
            tgt = p["targets"]
            speed[:] = 6.0
            gain = 0.7
        p["tau"] += 1
        self.de = self._move(self.de, tgt, speed, gain)

    def ball_step(self):
        if self.flight is not None:
            src, dst, k = self.flight
            k += 1
            frac = k / 2.0
            self.ball = (1 - frac) * self.off[src] + frac * self.off[dst]
            if k >= 2:
                self.holder = dst
                self.flight = None
            else:
                self.flight = (src, dst, k)
        else:
            self.ball = self.off[self.holder] + np.array([0.25, 0.0])

    def _move(self, pos, tgt, speed, gain):
        new = _step_towards(pos, tgt, (speed * self.dt)[:, None], gain)
        return new + self.rng.normal(pos.shape) * self.cfg.process_noise


def synth_generate(
    rng: SeededRng,
    config: DatasetConfig,
    n_scenes: int,
    tactic_mix: Mapping[int, float] | Sequence[float] | None = None,
    vocab: TacticVocabulary | None = None,
    synth: SynthConfig = SynthConfig(),
) -> list[Scene]:
    if n_scenes < 0:
        raise ArgumentError("n_scenes must be non-negative")
    if config.n_teams != 2:
        raise ArgumentError("the play generator scripts exactly one offense and one defense")
    vocab = vocab or TacticVocabulary.default()
    if vocab.size != config.vocab_size:
        raise ArgumentError(f"vocabulary size {vocab.size} != config vocab_size {config.vocab_size}")
    off_p, def_p = _normalise_mix(tactic_mix if tactic_mix is not None else default_tactic_mix(vocab), vocab)
    n = config.players_per_team
    frames = config.n_frames
    dt = 1.0 / config.fps
    hx, hy = config.court_extent[0] / 2, config.court_extent[1] / 2
    team_of = [0] * n + [1] * n + [BALL_TEAM]
    scenes = []
    for idx in range(n_scenes):
        r = rng.child("scene", idx)
        obs_off = int(r.choice(vocab.size, p=off_p))
        obs_def = int(r.choice(vocab.size, p=def_p))
        fut_off = _maybe_switch(r, obs_off, off_p, synth.p_switch, synth.switch_decay)
        fut_def = _maybe_switch(r, obs_def, def_p, synth.p_switch, synth.switch_decay)
        play = _Play(r, n, frames, dt, synth)
        play.init_offense(vocab.entries[obs_off].name)
        play.init_defense(vocab.entries[obs_def].name)
        play.plan_offense(vocab.entries[obs_off].name)
        play.plan_defense(vocab.entries[obs_def].name)
        traj = np.zeros((2 * n + 1, frames, 2))
        for f in range(frames):
            if f == config.t_obs:
                if fut_off != obs_off:
                    play.plan_offense(vocab.entries[fut_off].name)
                if fut_def != obs_def:
                    play.plan_defense(vocab.entries[fut_def].name)
            if f > 0:
                play.offense_step()
                play.defense_step()
                play.ball_step()
            play.off = _clip(play.off, hx, hy)
            play.de = _clip(play.de, hx, hy)
            traj[:n, f] = play.off
            traj[n : 2 * n, f] = play.de
            traj[2 * n, f] = play.ball
        traj = traj + r.normal(traj.shape) * synth.sigma_pos
        traj = _clip(traj, hx, hy)
        scenes.append(
            Scene(
                scene_id=f"synth-{rng.seed}-{idx:06d}",
                positions=traj,
                team_of=list(team_of),
                tactics=[TeamTactics(0, obs_off, fut_off), TeamTactics(1, obs_def, fut_def)],
                fps=config.fps,
                t_obs=config.t_obs,
            )
        )
    return scenes


def _maybe_switch(rng: SeededRng, label: int, probs: np.ndarray, p_switch: float, decay: float = 1.0) -> int:
    u = rng.uniform()
    alt = probs.copy()
    alt[label] = 0.0
    side = np.flatnonzero(probs > 0)
    if label in side:
        pos = int(np.flatnonzero(side == label)[0])
        for d in range(1, len(side)):
            alt[side[(pos + d) % len(side)]] *= decay ** (d - 1)
    if u >= p_switch or alt.sum() == 0:
        return label
    return int(rng.choice(len(alt), p=alt / alt.sum()))


def _clip(xy, hx, hy):
    out = xy.copy()
    out[..., 0] = np.clip(out[..., 0], -hx, hx)
    out[..., 1] = np.clip(out[..., 1], -hy, hy)
    return out
