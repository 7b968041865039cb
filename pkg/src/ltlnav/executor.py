"""Zero-shot execution of LTL tasks with a subgoal-conditioned policy.

Tracks the set of automaton states consistent with the labels seen so far,
picks the candidate subgoal with the best value trade-off, and switches
subgoals on a timeout, marking the abandoned (state, reach) pair as
unsatisfiable so it is not offered again within the episode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .buchi import BuchiAutomaton, compile_formula
from .envs import (
    DT, MAX_SPEED, TURN_RATE, EnvConfig, achievable_assignments, alphabet_for,
    make_env,
)
from .ltl import (
    Always, And, Atom, Bool, Eventually, Formula, Not, Or, eval_bool, parse,
)
from .nets import forward, head_from_json, mean_action
from .reduction import FusionMode, reduce
from .subgoals import Subgoal, extract_subgoals
from .trainer import STREAM_EVAL, stream_rng

__all__ = [
    "SUCCESS", "VIOLATION", "OTHER",
    "SATISFIED", "VIOLATED", "UNDETERMINED",
    "Outcome", "TimeoutPolicy", "EvalReport",
    "PolicyAgent", "ScriptedGridAgent", "ScriptedZoneAgent",
    "select_subgoal", "run_episode", "classify_trace_oracle",
    "accepting_run_count", "evaluate",
]

SUCCESS = "success"
VIOLATION = "violation"
OTHER = "other"

SATISFIED = "satisfied"
VIOLATED = "violated"
UNDETERMINED = "undetermined"


@dataclass
class Outcome:
    status: str
    steps: int
    steps_to_success: int | None = None
    accepting_visits: int = 0

    def __post_init__(self):
        if self.status not in (SUCCESS, VIOLATION, OTHER):
            raise ValueError(f"unknown status {self.status!r}")
        if (self.steps_to_success is not None) != (self.status == SUCCESS):
            raise ValueError("steps_to_success present iff status is success")


@dataclass(frozen=True)
class TimeoutPolicy:
    mu_subgoal: int | None = None
    eps_scale: float = 0.5

    def threshold(self, max_steps: int) -> int:
        # fall back to a quarter of the horizon when no training statistic
        # is available
        if self.mu_subgoal is None:
            return max(1, max_steps // 4)
        return max(1, math.ceil((1.0 + self.eps_scale) * self.mu_subgoal))


@dataclass
class EvalReport:
    spec: str
    eta_s: float
    eta_v: float
    eta_o: float
    mu: float | None
    mu_acc: float | None
    seeds: tuple[int, ...]
    n: int

    def __post_init__(self):
        if abs(self.eta_s + self.eta_v + self.eta_o - 1.0) > 1e-12:
            raise ValueError("rates must sum to 1")
        self.seeds = tuple(int(s) for s in self.seeds)

    def to_json(self) -> dict:
        return {
            "spec": self.spec, "eta_s": self.eta_s, "eta_v": self.eta_v,
            "eta_o": self.eta_o, "mu": self.mu, "mu_acc": self.mu_acc,
            "seeds": list(self.seeds), "n": self.n,
        }


# -- agents --------------------------------------------------------------------


class PolicyAgent:
    """Deterministic wrapper around a trained checkpoint.

    Actions come from the mean of the policy head; candidate scores are
    V_r(s) - lambda(s) * V_h(s) on the subgoal-reduced observation.
    """

    def __init__(self, heads: dict, env_config: EnvConfig, fusion: str,
                 mu_subgoal: int | None = None):
        self.heads = heads
        self.env_config = env_config
        self.mode = FusionMode.RawBitvector if fusion == "raw" else None
        self.alphabet = alphabet_for(env_config)
        self.mu_subgoal = mu_subgoal

    @classmethod
    def from_checkpoint(cls, ckpt: dict) -> "PolicyAgent":
        heads = {name: head_from_json(d) for name, d in ckpt["heads"].items()}
        return cls(heads, EnvConfig.from_json(ckpt["env"]), ckpt["fusion"],
                   ckpt.get("mu_subgoal"))

    def _vec(self, obs, sub: Subgoal) -> np.ndarray:
        return reduce(obs, sub, self.mode, self.alphabet)

    def _head(self, name: str, x: np.ndarray):
        spec, params = self.heads[name]
        return spec, forward(spec, params, x)

    def act(self, obs, sub: Subgoal):
        spec, out = self._head("policy", self._vec(obs, sub))
        return mean_action(spec, out)

    def score(self, obs, sub: Subgoal) -> float:
        x = self._vec(obs, sub)
        v_r = float(self._head("v_r", x)[1])
        v_h = float(self._head("v_h", x)[1])
        lam = float(self._head("lam", x)[1])
        return v_r - lam * v_h


class ScriptedGridAgent:
    """Hand-coded torus-grid navigator used when no checkpoint is trained.

    Walks toward the nearest cell carrying the reach letter, refusing moves
    that land on a letter in the avoid set.
    """

    def __init__(self, env):
        self.env = env

    def _delta(self, a: int, b: int) -> int:
        g = self.env.config.grid_size
        return (b - a + g // 2) % g - g // 2

    def _targets(self, sub: Subgoal) -> list[tuple[int, int]]:
        return [cell for cell, p in self.env.state.placement.items()
                if (1 << p) == sub.reach]

    def _distance(self, cell: tuple[int, int], sub: Subgoal) -> int:
        ar, ac = cell
        return min(abs(self._delta(ar, tr)) + abs(self._delta(ac, tc))
                   for tr, tc in self._targets(sub))

    def act(self, obs, sub: Subgoal) -> int:
        g = self.env.config.grid_size
        ar, ac = self.env.state.agent
        placement = self.env.state.placement
        ranked = []
        for action, (dr, dc) in enumerate(self.env._MOVES):
            cell = ((ar + dr) % g, (ac + dc) % g)
            ranked.append((self._distance(cell, sub), action, cell))
        ranked.sort()
        for _, action, cell in ranked:
            p = placement.get(cell)
            if p is None or (1 << p) not in sub.avoid:
                return action
        return ranked[0][1]

    def score(self, obs, sub: Subgoal) -> float:
        return -float(self._distance(self.env.state.agent, sub))


class ScriptedZoneAgent:
    """Hand-coded point-robot navigator for the zone environment.

    Steers to the closest point whose label would equal the reach
    assignment (a zone center, or the midpoint of a zone pair for two-color
    assignments) while skirting zones whose color appears in the avoid set.
    """

    def __init__(self, env):
        self.env = env

    def _zone_pairs(self, props: list[int]):
        a, b = props
        return [(za, zb) for za in self.env.state.zones if za.color == a
                for zb in self.env.state.zones if zb.color == b]

    def _target(self, sub: Subgoal) -> np.ndarray:
        zones = self.env.state.zones
        pos = self.env.state.position
        props = [i for i in range(len(self.env.config.letters))
                 if sub.reach >> i & 1]
        if len(props) == 1:
            centers = [np.asarray(z.center) for z in zones
                       if z.color == props[0]]
        else:
            centers = [(np.asarray(za.center) + np.asarray(zb.center)) / 2.0
                       for za, zb in self._zone_pairs(props)]
        return min(centers, key=lambda c: float(np.linalg.norm(c - pos)))

    def _avoid_zones(self, sub: Subgoal):
        colors = set()
        for mask in sub.avoid:
            colors.update(i for i in range(len(self.env.config.letters))
                          if mask >> i & 1)
        return [z for z in self.env.state.zones if z.color in colors]

    def act(self, obs, sub: Subgoal) -> np.ndarray:
        st = self.env.state
        vec = self._target(sub) - st.position
        dist = float(np.linalg.norm(vec))
        for z in self._avoid_zones(sub):
            away = st.position - z.center
            d = float(np.linalg.norm(away))
            margin = z.radius + 0.3
            if 1e-9 < d < margin:
                vec = vec + away / d * 4.0 * (margin - d)
        desired = math.atan2(vec[1], vec[0])
        diff = math.remainder(desired - st.heading, 2 * math.pi)
        turn = float(np.clip(diff / (TURN_RATE * DT), -1.0, 1.0))
        brake = dist < 0.3 and st.speed > 0.5 * MAX_SPEED
        accel = -1.0 if (abs(diff) > 1.2 or brake) else 1.0
        return np.array([accel, turn])

    def score(self, obs, sub: Subgoal) -> float:
        return -float(np.linalg.norm(self._target(sub) -
                                     self.env.state.position))


# -- subgoal selection and the episode loop ------------------------------------


def select_subgoal(candidates: list[tuple[int, Subgoal]], agent, obs):
    """Best-scoring candidate; the first maximum wins, so ties fall back to
    the deterministic candidate ordering."""
    if not candidates:
        raise ValueError("candidates must be nonempty")
    best = None
    best_score = -math.inf
    for q, sub in candidates:
        s = float(agent.score(obs, sub))
        if s > best_score:
            best, best_score = (q, sub), s
    return best


def _agent_position(env):
    st = env.state
    if hasattr(st, "position"):
        return [float(st.position[0]), float(st.position[1])]
    return [int(st.agent[0]), int(st.agent[1])]


class _CandidateCache:
    def __init__(self, aut: BuchiAutomaton, achievable: tuple[int, ...]):
        self.aut = aut
        self.achievable = tuple(achievable)
        self._memo: dict = {}

    def get(self, states: frozenset[int],
            unsat: frozenset[tuple[int, int]]) -> list[tuple[int, Subgoal]]:
        key = (states, unsat)
        if key not in self._memo:
            self._memo[key] = extract_subgoals(self.aut, states, unsat,
                                               self.achievable)
        return self._memo[key]


def run_episode(env, aut: BuchiAutomaton, agent, *, rng,
                timeout: int, max_steps: int | None = None,
                switching: bool = True,
                achievable: tuple[int, ...] | None = None,
                cache: _CandidateCache | None = None,
                record_positions: bool = False):
    """One rollout under automaton guidance; returns (Outcome, trace).

    The trace holds the per-step label sequence plus the subgoal switch log
    (and agent positions when requested), enough for offline re-checking.
    """
    if achievable is None:
        achievable = achievable_assignments(env.config)
    if max_steps is None:
        max_steps = env.config.max_steps
    if cache is None:
        cache = _CandidateCache(aut, achievable)
    cls = aut.classify()
    accepting = frozenset(aut.accepting)

    obs = env.reset(rng)
    states = frozenset({aut.initial})
    unsat: frozenset[tuple[int, int]] = frozenset()
    trace = {"labels": [], "switches": []}
    if record_positions:
        trace["positions"] = [_agent_position(env)]

    def log_switch(t, q, sub):
        trace["switches"].append(
            {"t": t, "state": q, "reach": sub.reach,
             "avoid": sorted(sub.avoid)})

    if states & cls.accepting_sink:
        return Outcome(SUCCESS, 0, steps_to_success=0), trace
    if not (states & cls.live):
        return Outcome(VIOLATION, 0), trace
    cand = cache.get(states, unsat)
    if not cand:
        return Outcome(OTHER, 0), trace
    cur_q, cur_sub = select_subgoal(cand, agent, obs)
    log_switch(0, cur_q, cur_sub)
    steps_on = 0
    visits = 0

    for t in range(1, max_steps + 1):
        action = agent.act(obs, cur_sub)
        obs, label, done = env.step(action)
        trace["labels"].append(label)
        if record_positions:
            trace["positions"].append(_agent_position(env))
        steps_on += 1
        nxt = aut.step(states, label)
        if nxt & accepting:
            visits += 1
        if nxt & cls.accepting_sink:
            return (Outcome(SUCCESS, t, steps_to_success=t,
                            accepting_visits=visits), trace)
        if not nxt or not (nxt & cls.live):
            return Outcome(VIOLATION, t, accepting_visits=visits), trace
        if nxt != states:
            states = nxt
            steps_on = 0
            cand = cache.get(states, unsat)
            if not cand:
                return Outcome(OTHER, t, accepting_visits=visits), trace
            cur_q, cur_sub = select_subgoal(cand, agent, obs)
            log_switch(t, cur_q, cur_sub)
        elif steps_on >= timeout:
            steps_on = 0
            # accepting state in the set: the run is already making progress
            # in the Buchi sense, so only the timer restarts
            if switching and not (states & accepting):
                unsat = unsat | {(q, cur_sub.reach)
                                 for q in states if q not in accepting}
                cand = cache.get(states, unsat)
                if not cand:
                    return Outcome(OTHER, t, accepting_visits=visits), trace
                cur_q, cur_sub = select_subgoal(cand, agent, obs)
                log_switch(t, cur_q, cur_sub)
        if done:
            break
    return (Outcome(OTHER, len(trace["labels"]), accepting_visits=visits),
            trace)


def classify_trace_oracle(aut: BuchiAutomaton, labels) -> str:
    """Offline re-check of a finite label sequence against the automaton.

    Satisfied: some run reaches an accepting sink. Violated: every run dies
    (the tracked set empties or keeps no live state). Otherwise the prefix
    decides nothing.
    """
    cls = aut.classify()
    states = frozenset({aut.initial})
    if states & cls.accepting_sink:
        return SATISFIED
    if not (states & cls.live):
        return VIOLATED
    for label in labels:
        states = aut.step(states, int(label))
        if states & cls.accepting_sink:
            return SATISFIED
        if not states or not (states & cls.live):
            return VIOLATED
    return UNDETERMINED


# -- metrics --------------------------------------------------------------------


def _propositional(f: Formula) -> bool:
    if isinstance(f, (Bool, Atom)):
        return True
    if isinstance(f, Not):
        return _propositional(f.arg)
    if isinstance(f, (And, Or)):
        return _propositional(f.lhs) and _propositional(f.rhs)
    return False


def _stabilization_core(f: Formula) -> Formula | None:
    """The propositional core p when f has the shape F G p, else None."""
    if (isinstance(f, Eventually) and isinstance(f.arg, Always)
            and _propositional(f.arg.arg)):
        return f.arg.arg
    return None


def accepting_run_count(formula: Formula, labels, alphabet,
                        visits: int) -> int:
    """Accepting-state visit count for one trajectory.

    Stabilization tasks (F G p) are scored by the run of p-steps counted
    backward from the final timestep; everything else uses the online count
    of steps whose successor state set touched the accepting set.
    """
    core = _stabilization_core(formula)
    if core is None:
        return visits
    count = 0
    for label in reversed(labels):
        if not eval_bool(core, int(label), alphabet):
            break
        count += 1
    return count


def evaluate(specs, checkpoint: dict | None = None, *, n_traj: int = 100,
             seeds=(0, 1, 2, 3, 4), horizon_multiplier: int = 1,
             eps_scale: float = 0.5, switching: bool = True,
             env_config: EnvConfig | None = None, agent_factory=None,
             record_traces: bool = False, timeout: int | None = None):
    """Run each spec over seeds x episodes and aggregate outcome rates.

    Agents come from the checkpoint unless agent_factory(env) is given
    (scripted baselines). Returns a list of EvalReport aligned with specs;
    with record_traces, returns (reports, traces) where traces[i] is the
    per-episode (outcome, trace) list for specs[i].
    """
    if checkpoint is None and agent_factory is None:
        raise ValueError("need a checkpoint or an agent_factory")
    if env_config is None:
        env_config = EnvConfig.from_json(checkpoint["env"])
    if horizon_multiplier != 1:
        d = env_config.to_json()
        d["max_steps"] = env_config.max_steps * int(horizon_multiplier)
        env_config = EnvConfig.from_json(d)
    alphabet = alphabet_for(env_config)
    achievable = achievable_assignments(env_config)

    env = make_env(env_config)
    if agent_factory is not None:
        agent = agent_factory(env)
        mu = getattr(agent, "mu_subgoal", None)
    else:
        agent = PolicyAgent.from_checkpoint(checkpoint)
        mu = agent.mu_subgoal
    if timeout is None:
        timeout = TimeoutPolicy(mu, eps_scale).threshold(env_config.max_steps)

    reports = []
    all_traces = []
    for text in specs:
        formula = parse(text) if isinstance(text, str) else text
        aut = compile_formula(formula, alphabet)
        cache = _CandidateCache(aut, achievable)
        n_s = n_v = 0
        steps_to = []
        acc_counts = []
        spec_traces = []
        for seed in seeds:
            for ep in range(n_traj):
                rng = stream_rng(int(seed), STREAM_EVAL, ep)
                outcome, trace = run_episode(
                    env, aut, agent, rng=rng, timeout=timeout,
                    max_steps=env_config.max_steps, switching=switching,
                    achievable=achievable, cache=cache,
                    record_positions=record_traces)
                if outcome.status == SUCCESS:
                    n_s += 1
                    steps_to.append(outcome.steps_to_success)
                elif outcome.status == VIOLATION:
                    n_v += 1
                if outcome.status != VIOLATION:
                    acc_counts.append(accepting_run_count(
                        formula, trace["labels"], alphabet,
                        outcome.accepting_visits))
                if record_traces:
                    spec_traces.append((outcome, trace))
        total = len(tuple(seeds)) * n_traj
        eta_s = n_s / total
        eta_v = n_v / total
        reports.append(EvalReport(
            spec=text if isinstance(text, str) else str(text),
            eta_s=eta_s, eta_v=eta_v, eta_o=1.0 - eta_s - eta_v,
            mu=float(np.mean(steps_to)) if steps_to else None,
            mu_acc=float(np.mean(acc_counts)) if acc_counts else None,
            seeds=tuple(seeds), n=n_traj))
        all_traces.append(spec_traces)
    if record_traces:
        return reports, all_traces
    return reports
