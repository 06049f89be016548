"""The iterative estimate-exchange protocol: synchronous rounds of
neighbor averaging over a doubly-stochastic weight matrix, the
consensus/estimation error metrics, and global aggregation.

Three update dynamics are provided:

* ``matrix_form`` (default): pure consensus averaging of the anchors,
  lambda^(k+1) = W lambda^(k). This is the dynamics under which the
  geometric contraction e^(k) <= rho^k e^(0) actually holds.
* ``paper_literal``: lambda^(k+1) = anchor + W lambda^(k) - lambda^(k).
  Kept for demonstration; the iteration matrix W - I can have spectral
  radius above 1, in which case the iterate diverges.
* ``damped(gamma)``: lambda^(k+1) = (1-gamma) anchor + gamma W lambda^(k),
  a contraction that keeps the anchor as a persistent drive term.
"""

from dataclasses import dataclass

import numpy as np

from .comm_graph import WeightMatrix

MODES = ("matrix_form", "paper_literal", "damped")


class DivergenceError(RuntimeError):
    """The consensus iterate blew up (non-finite values, or growth far
    beyond the initial disagreement)."""

    def __init__(self, round_: int, error: float):
        super().__init__(f"consensus diverged at round {round_} (error {error:.3e})")
        self.round = round_
        self.error = error


@dataclass(frozen=True)
class ConsensusMode:
    kind: str
    gamma: float = 0.5  # only used by "damped"

    def __post_init__(self):
        if self.kind not in MODES:
            raise ValueError(f"unknown mode {self.kind!r}")
        if self.kind == "damped" and not 0.0 < self.gamma < 1.0:
            raise ValueError("damping factor must lie strictly in (0, 1)")


@dataclass(frozen=True)
class AgentState:
    """One agent's current estimates and its fixed local anchor."""

    agent: int
    estimates: np.ndarray
    anchor: np.ndarray

    def __post_init__(self):
        est = np.asarray(self.estimates, dtype=float)
        anc = np.asarray(self.anchor, dtype=float)
        if est.ndim != 1 or est.shape != anc.shape or est.size < 1:
            raise ValueError("estimates and anchor must be equal-length vectors")
        if not (np.all(np.isfinite(est)) and np.all(np.isfinite(anc))):
            raise ValueError("state values must be finite")
        est.setflags(write=False)
        anc.setflags(write=False)
        object.__setattr__(self, "estimates", est)
        object.__setattr__(self, "anchor", anc)


@dataclass(frozen=True)
class GlobalWeights:
    """Convex combination weights for the global estimate."""

    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if np.any(beta < 0) or abs(beta.sum() - 1.0) > 1e-12:
            raise ValueError("beta must be nonnegative and sum to 1")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)


def uniform_weights(m: int) -> GlobalWeights:
    return GlobalWeights(np.full(m, 1.0 / m))


def block_size_weights(block_sizes) -> GlobalWeights:
    sizes = np.asarray(block_sizes, dtype=float)
    return GlobalWeights(sizes / sizes.sum())


def init_states(anchors) -> list:
    """One state per agent, estimates initialized to the anchors."""
    anchors = [np.asarray(a, dtype=float) for a in anchors]
    if not anchors:
        raise ValueError("need at least one agent")
    j = anchors[0].shape
    if any(a.shape != j for a in anchors):
        raise ValueError("anchor lists must all have the same length")
    return [AgentState(i, a.copy(), a) for i, a in enumerate(anchors)]


def _stack(states):
    return np.stack([s.estimates for s in states]), np.stack([s.anchor for s in states])


def consensus_round(states, wm: WeightMatrix, mode: ConsensusMode) -> list:
    """One synchronous round: every agent reads only round-k values."""
    if wm.m != len(states):
        raise ValueError(f"weight matrix is {wm.m}x{wm.m} for {len(states)} agents")
    est, anc = _stack(states)
    if mode.kind == "matrix_form":
        nxt = wm.w @ est
    elif mode.kind == "paper_literal":
        nxt = anc + wm.w @ est - est
    else:  # damped
        nxt = (1.0 - mode.gamma) * anc + mode.gamma * (wm.w @ est)
    return [AgentState(s.agent, nxt[i], s.anchor) for i, s in enumerate(states)]


def consensus_error(states) -> float:
    """Maximum pairwise disagreement over agents and eigenvalue
    indices."""
    if not states:
        raise ValueError("need at least one agent")
    est, _ = _stack(states)
    return float(np.max(est.max(axis=0) - est.min(axis=0)))


def deviation_norm(states) -> float:
    """Frobenius norm of the estimate stack minus its agent-mean.

    This is the disagreement measure that provably contracts by the
    SLEM every matrix_form round (W is symmetric doubly stochastic, so
    it shrinks anything orthogonal to the all-ones direction by at most
    rho). The max-pairwise ``consensus_error`` does *not* contract
    round by round in general, even though both vanish together.
    """
    if not states:
        raise ValueError("need at least one agent")
    est, _ = _stack(states)
    return float(np.linalg.norm(est - est.mean(axis=0)))


def estimation_error(states, truth) -> np.ndarray:
    """|estimate - truth| per agent (rows) and eigenvalue index
    (columns)."""
    truth = np.asarray(truth, dtype=float)
    est, _ = _stack(states)
    if truth.shape != (est.shape[1],):
        raise ValueError(
            f"truth has length {truth.size}, states track {est.shape[1]} values"
        )
    return np.abs(est - truth)


def aggregate_global(states, gw: GlobalWeights) -> np.ndarray:
    """Componentwise convex combination of agent estimates."""
    est, _ = _stack(states)
    if gw.beta.shape != (est.shape[0],):
        raise ValueError("one beta weight per agent required")
    return gw.beta @ est


def divergence_threshold(e0: float) -> float:
    # Far enough above any converging trajectory to be unambiguous,
    # small enough to trip long before float overflow.
    return 1e9 * max(1.0, e0)


def run_to_convergence(states, wm: WeightMatrix, mode: ConsensusMode,
                       tol: float, max_rounds: int):
    """Iterate until consensus_error < tol or max_rounds. Returns
    (final states, rounds used, error history incl. round 0, stop
    reason); raises DivergenceError if the iterate blows up."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    history = [consensus_error(states)]
    if history[0] < tol:
        return states, 0, history, "converged"
    threshold = divergence_threshold(history[0])
    for k in range(1, max_rounds + 1):
        states = consensus_round(states, wm, mode)
        est, _ = _stack(states)
        if not np.all(np.isfinite(est)):
            raise DivergenceError(k, float("inf"))
        e = consensus_error(states)
        history.append(e)
        if e > threshold:
            raise DivergenceError(k, e)
        if e < tol:
            return states, k, history, "converged"
    return states, max_rounds, history, "max_rounds"
