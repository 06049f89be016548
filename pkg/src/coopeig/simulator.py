"""End-to-end experiment orchestration: build or load a matrix,
partition it over agents, set up local estimators (training them if
needed), run consensus rounds under a link-failure model, and record
per-round metrics, complexity counters and exportable traces.
"""

import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import yaml

from . import comm_graph, consensus, local_estimator, matrix_core
from .comm_graph import FailureModel, apply_failures, build_graph, metropolis_weights, slem
from .consensus import (
    ConsensusMode,
    consensus_error,
    deviation_norm,
    divergence_threshold,
    estimation_error,
)
from .local_estimator import (
    MlpEstimator,
    NoisyOracleEstimator,
    OracleEstimator,
    TrainConfig,
    estimate,
    init_mlp,
    load_params,
    synthesize_training_set,
    train,
)
from .matrix_core import diagonal_block, generate_spd, jacobi_eigen, load_matrix, partition_rows
from .seeding import child_seed, keyed_rng


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MatrixSpec:
    """Matrix source: generate with a prescribed spectrum, or load from
    a file."""

    kind: str  # "generate" | "file"
    n: int = 0
    spectrum: tuple = ()
    path: str = ""

    def __post_init__(self):
        if self.kind == "generate":
            if self.n < 1 or len(self.spectrum) != self.n:
                raise ConfigError("generated matrix needs n and a spectrum of length n")
        elif self.kind == "file":
            if not self.path:
                raise ConfigError("file matrix needs a path")
        else:
            raise ConfigError(f"unknown matrix kind {self.kind!r}")


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str  # "oracle" | "noisy_oracle" | "mlp"
    sigma: float = 0.0
    params_path: str = ""
    hidden: tuple = (32,)
    learning_rate: float = 0.05
    epochs: int = 200
    samples: int = 32
    spectrum_range: tuple = (0.5, 5.0)

    def __post_init__(self):
        if self.kind not in ("oracle", "noisy_oracle", "mlp"):
            raise ConfigError(f"unknown estimator kind {self.kind!r}")
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")


@dataclass(frozen=True)
class SimConfig:
    matrix: MatrixSpec
    agents: int
    topology: str
    estimator: EstimatorConfig
    mode: ConsensusMode
    failure_p: float = 0.0
    beta: str = "uniform"  # "uniform" | "block_size"
    tol: float = 1e-6
    max_rounds: int = 300
    seed: int = 0
    tracked: int = 1
    parallel: bool = False

    def __post_init__(self):
        if self.agents < 1:
            raise ConfigError("agents must be >= 1")
        if self.matrix.kind == "generate" and self.agents > self.matrix.n:
            raise ConfigError("more agents than matrix rows")
        if not 0.0 <= self.failure_p < 1.0:
            raise ConfigError("failure probability must be in [0, 1)")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.max_rounds < 0:
            raise ConfigError("max_rounds must be >= 0")
        if self.tracked < 1:
            raise ConfigError("tracked eigenvalue count must be >= 1")
        if self.beta not in ("uniform", "block_size"):
            raise ConfigError(f"unknown beta choice {self.beta!r}")


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    consensus_error: float
    deviation_norm: float  # mean-deviation norm; contracts by the SLEM
    max_est_error: float
    mean_est_error: float
    global_estimate: np.ndarray
    bound: float
    scalars_sent: int
    flops_local: int


@dataclass(frozen=True)
class Trace:
    config: SimConfig
    truth: np.ndarray  # tracked smallest global eigenvalues, exact oracle
    rho: float  # SLEM of the failure-free weight matrix
    rounds: list  # RoundMetrics, round 0 first
    final_estimates: np.ndarray  # agents x tracked
    stop_reason: str  # "converged" | "max_rounds" | "diverged"
    block_sizes: tuple

    @property
    def rounds_used(self) -> int:
        return self.rounds[-1].round

    @property
    def final_consensus_error(self) -> float:
        return self.rounds[-1].consensus_error


def theoretical_bound(e0: float, rho: float, k: int) -> float:
    """Geometric consensus-error bound rho^k * e0."""
    if e0 < 0 or not 0.0 <= rho <= 1.0:
        raise ValueError("need e0 >= 0 and 0 <= rho <= 1")
    return rho**k * e0


def _resolve_matrix(cfg: SimConfig) -> matrix_core.DenseSymMatrix:
    if cfg.matrix.kind == "generate":
        return generate_spd(cfg.matrix.n, np.array(cfg.matrix.spectrum),
                            child_seed(cfg.seed, "matrix"))
    return load_matrix(cfg.matrix.path)


def _setup_estimators(cfg: SimConfig, blocks):
    """One estimator per agent; MLP training fans out to threads when
    cfg.parallel is set (results are assembled in agent order, so the
    outcome is identical either way)."""
    ecfg = cfg.estimator
    if ecfg.kind == "oracle":
        return [OracleEstimator() for _ in blocks]
    if ecfg.kind == "noisy_oracle":
        noise_seed = child_seed(cfg.seed, "estimator-noise")
        return [NoisyOracleEstimator(ecfg.sigma, noise_seed) for _ in blocks]
    if ecfg.params_path:
        params = load_params(ecfg.params_path)
        for b in blocks:
            if b.n != params.block_dim:
                raise ConfigError(
                    f"pretrained network expects {params.block_dim}x{params.block_dim} "
                    f"blocks, agent block is {b.n}x{b.n}"
                )
        return [MlpEstimator(params) for _ in blocks]

    def train_one(i):
        k = blocks[i].n
        tset = synthesize_training_set(
            k, ecfg.samples, ecfg.spectrum_range, child_seed(cfg.seed, "mlp-data", i)
        )
        p0 = init_mlp(k, ecfg.hidden, child_seed(cfg.seed, "mlp-init", i))
        params, _ = train(p0, tset, TrainConfig(ecfg.learning_rate, ecfg.epochs))
        return MlpEstimator(params)

    indices = range(len(blocks))
    if cfg.parallel:
        with ThreadPoolExecutor() as pool:
            return list(pool.map(train_one, indices))
    return [train_one(i) for i in indices]


def run_simulation(cfg: SimConfig) -> Trace:
    """Execute the full protocol and return its trace. Deterministic:
    identical configs (including seed) give bit-identical traces."""
    A = _resolve_matrix(cfg)
    if cfg.agents > A.n:
        raise ConfigError("more agents than matrix rows")
    part = partition_rows(A.n, cfg.agents)
    blocks = [diagonal_block(A, part, i) for i in range(part.m)]
    j = cfg.tracked
    if j > min(part.block_sizes):
        raise ConfigError(
            f"cannot track {j} eigenvalues with smallest block size "
            f"{min(part.block_sizes)}"
        )
    truth = jacobi_eigen(A).eigenvalues[:j]

    estimators = _setup_estimators(cfg, blocks)
    anchors = [
        estimate(estimators[i], blocks[i], agent=i, round_=0)[:j]
        for i in range(part.m)
    ]
    states = consensus.init_states(anchors)

    base = build_graph(cfg.topology, cfg.agents, child_seed(cfg.seed, "graph"))
    w0 = metropolis_weights(base)
    rho = slem(w0)
    fm = FailureModel(cfg.failure_p, child_seed(cfg.seed, "failures"))
    if cfg.beta == "uniform":
        gw = consensus.uniform_weights(part.m)
    else:
        gw = consensus.block_size_weights(part.block_sizes)

    flops_per_round = int(sum(k * k for k in part.block_sizes))
    e0 = consensus_error(states)
    threshold = divergence_threshold(e0)

    def metrics(k, e, scalars, flops):
        eps = estimation_error(states, truth)
        return RoundMetrics(
            round=k,
            consensus_error=e,
            deviation_norm=deviation_norm(states),
            max_est_error=float(eps.max()),
            mean_est_error=float(eps.mean()),
            global_estimate=consensus.aggregate_global(states, gw),
            bound=theoretical_bound(e0, rho, k),
            scalars_sent=scalars,
            flops_local=flops,
        )

    rounds = [metrics(0, e0, 0, 0)]
    stop_reason = "converged" if e0 < cfg.tol else "max_rounds"
    if e0 >= cfg.tol:
        for k in range(1, cfg.max_rounds + 1):
            g_k = apply_failures(base, fm, k)
            w_k = w0 if cfg.failure_p == 0.0 else metropolis_weights(g_k)
            states = consensus.consensus_round(states, w_k, cfg.mode)
            est = np.stack([s.estimates for s in states])
            finite = bool(np.all(np.isfinite(est)))
            e = consensus_error(states) if finite else float("inf")
            rounds.append(metrics(k, e, 2 * j * len(g_k.edges), flops_per_round))
            if not finite or e > threshold:
                stop_reason = "diverged"
                break
            if e < cfg.tol:
                stop_reason = "converged"
                break
        else:
            stop_reason = "max_rounds"

    final = np.stack([s.estimates for s in states])
    return Trace(cfg, truth, rho, rounds, final, stop_reason, part.block_sizes)


@dataclass(frozen=True)
class FitResult:
    beta_hat: float
    gamma_hat: float
    rho_used: float
    holds: bool  # max-estimation-error <= beta rho^k + 1.05 gamma at every round


def fit_error_bound(trace: Trace) -> FitResult:
    """Fit the geometric-plus-floor error bound to a trace. The floor
    gamma is the mean max-error over the final 10% of rounds; beta is
    the smallest coefficient for which the bound covers every round."""
    eps = [r.max_est_error for r in trace.rounds]
    if len(eps) < 10:
        raise ValueError(f"need at least 10 recorded rounds, have {len(eps)}")
    tail = eps[-max(1, math.ceil(0.1 * len(eps))):]
    gamma_hat = float(np.mean(tail))
    rho = trace.rho
    beta_hat = 0.0
    for k, e in enumerate(eps):
        decay = rho**k
        if decay > 0.0:
            beta_hat = max(beta_hat, (e - gamma_hat) / decay)
    beta_hat = max(beta_hat, 0.0)
    holds = all(
        e <= (beta_hat * rho**k + 1.05 * gamma_hat) * (1 + 1e-9)
        for k, e in enumerate(eps)
    )
    return FitResult(beta_hat, gamma_hat, rho, holds)


CSV_HEADER = "round,consensus_error,max_est_error,mean_est_error,bound,scalars_sent,flops_local"


def export_csv(trace: Trace, destination) -> None:
    """Write the per-round metrics; all reals carry 17 significant
    digits so parsing reproduces them bit-exactly. Write-then-rename so
    a failure never leaves a partial file."""
    destination = os.fspath(destination)
    directory = os.path.dirname(destination) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".csv.tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(CSV_HEADER + "\n")
            for r in trace.rounds:
                f.write(
                    f"{r.round},{r.consensus_error:.17g},{r.max_est_error:.17g},"
                    f"{r.mean_est_error:.17g},{r.bound:.17g},"
                    f"{r.scalars_sent},{r.flops_local}\n"
                )
        os.replace(tmp, destination)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_summary(truth_smallest: float, agent_values, stop_reason: str,
                   rounds_used: int, final_error: float) -> str:
    """The human-readable run report: the true smallest eigenvalue and
    the per-agent final estimates in bracketed list form."""
    vals = np.asarray(agent_values, dtype=float)
    listing = np.array2string(vals, max_line_width=48, precision=8,
                              suppress_small=False, separator=" ")
    lines = [
        f"True Smallest Eigenvalue: {truth_smallest!r}",
        "Estimated Smallest Eigenvalues by Agents:",
        listing,
        f"Stop reason: {stop_reason}",
        f"Rounds used: {rounds_used}",
        f"Final consensus error: {final_error:.17g}",
    ]
    return "\n".join(lines) + "\n"


def summary_report(trace: Trace) -> str:
    return format_summary(
        float(trace.truth[0]),
        trace.final_estimates[:, 0],
        trace.stop_reason,
        trace.rounds_used,
        trace.final_consensus_error,
    )


# --- config file handling -------------------------------------------------

_TOP_KEYS = {
    "matrix", "agents", "topology", "estimator", "mode", "gamma", "failure_p",
    "beta", "tol", "max_rounds", "seed", "tracked", "parallel",
}
_MATRIX_KEYS = {"kind", "n", "spectrum", "path"}
_EST_KEYS = {
    "kind", "sigma", "params_path", "hidden", "learning_rate", "epochs",
    "samples", "spectrum_range",
}


def _check_keys(d, allowed, where):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def _resolve_spectrum(spec, n, seed):
    """A spectrum may be an explicit list or a 'lo:hi' range drawn
    uniformly (sorted) with a seed-derived stream."""
    if isinstance(spec, str):
        lo, hi = (float(t) for t in spec.split(":"))
        if lo <= 0 or hi < lo:
            raise ConfigError(f"bad spectrum range {spec!r}")
        return tuple(np.sort(keyed_rng(seed, "spectrum-range").uniform(lo, hi, n)).tolist())
    return tuple(float(v) for v in spec)


def config_from_dict(d: dict) -> SimConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    _check_keys(d, _TOP_KEYS, "config")
    for key in ("matrix", "agents", "topology", "estimator", "mode"):
        if key not in d:
            raise ConfigError(f"missing required config key {key!r}")
    seed = int(d.get("seed", 0))

    md = d["matrix"]
    _check_keys(md, _MATRIX_KEYS, "matrix")
    if md.get("kind", "generate") == "generate":
        n = int(md["n"])
        matrix = MatrixSpec("generate", n=n,
                            spectrum=_resolve_spectrum(md["spectrum"], n, seed))
    else:
        matrix = MatrixSpec("file", path=str(md["path"]))

    ed = d["estimator"]
    _check_keys(ed, _EST_KEYS, "estimator")
    est = EstimatorConfig(
        kind=str(ed["kind"]),
        sigma=float(ed.get("sigma", 0.0)),
        params_path=str(ed.get("params_path", "")),
        hidden=tuple(int(h) for h in ed.get("hidden", (32,))),
        learning_rate=float(ed.get("learning_rate", 0.05)),
        epochs=int(ed.get("epochs", 200)),
        samples=int(ed.get("samples", 32)),
        spectrum_range=tuple(float(v) for v in ed.get("spectrum_range", (0.5, 5.0))),
    )

    mode = ConsensusMode(str(d["mode"]), gamma=float(d.get("gamma", 0.5)))
    return SimConfig(
        matrix=matrix,
        agents=int(d["agents"]),
        topology=str(d["topology"]),
        estimator=est,
        mode=mode,
        failure_p=float(d.get("failure_p", 0.0)),
        beta=str(d.get("beta", "uniform")),
        tol=float(d.get("tol", 1e-6)),
        max_rounds=int(d.get("max_rounds", 300)),
        seed=seed,
        tracked=int(d.get("tracked", 1)),
        parallel=bool(d.get("parallel", False)),
    )


def config_to_dict(cfg: SimConfig) -> dict:
    if cfg.matrix.kind == "generate":
        matrix = {"kind": "generate", "n": cfg.matrix.n,
                  "spectrum": list(cfg.matrix.spectrum)}
    else:
        matrix = {"kind": "file", "path": cfg.matrix.path}
    est = {
        "kind": cfg.estimator.kind,
        "sigma": cfg.estimator.sigma,
        "params_path": cfg.estimator.params_path,
        "hidden": list(cfg.estimator.hidden),
        "learning_rate": cfg.estimator.learning_rate,
        "epochs": cfg.estimator.epochs,
        "samples": cfg.estimator.samples,
        "spectrum_range": list(cfg.estimator.spectrum_range),
    }
    return {
        "matrix": matrix,
        "agents": cfg.agents,
        "topology": cfg.topology,
        "estimator": est,
        "mode": cfg.mode.kind,
        "gamma": cfg.mode.gamma,
        "failure_p": cfg.failure_p,
        "beta": cfg.beta,
        "tol": cfg.tol,
        "max_rounds": cfg.max_rounds,
        "seed": cfg.seed,
        "tracked": cfg.tracked,
        "parallel": cfg.parallel,
    }


def load_config(path) -> SimConfig:
    with open(path) as f:
        data = yaml.safe_load(f)
    return config_from_dict(data)


def save_snapshot(trace: Trace, path) -> None:
    """Config + seed + outcome, sufficient to re-run and verify."""
    data = {
        "config": config_to_dict(trace.config),
        "truth": trace.truth.tolist(),
        "rho": trace.rho,
        "final_estimates": trace.final_estimates.tolist(),
        "stop_reason": trace.stop_reason,
        "rounds_used": trace.rounds_used,
        "final_consensus_error": trace.final_consensus_error,
        "block_sizes": list(trace.block_sizes),
    }
    with open(path, "w") as f:
        json.dump(data, f, indent=1)


def load_snapshot(path) -> dict:
    with open(path) as f:
        return json.load(f)


def summary_from_snapshot(snap: dict) -> str:
    return format_summary(
        float(snap["truth"][0]),
        np.array(snap["final_estimates"])[:, 0],
        snap["stop_reason"],
        int(snap["rounds_used"]),
        float(snap["final_consensus_error"]),
    )
