"""Likelihood calibration of the generator against one observed path.

The loss is the negative mean log-likelihood of the observed log-returns
under a Gaussian kernel density estimate built, at every time step, from
the returns of a simulated ensemble:

    L(theta) = -(1/T) sum_t log p_t(r_t),
    p_t = KDE of {log(X^(i)_{t+1} / X^(i)_t) : i = 1..M}.

Gradients flow through the simulation pathwise (fixed noise) and through
the kernel density; the KDE bandwidth is treated as a constant during
backpropagation.  Each iteration draws fresh Brownian increments from an
iteration-indexed stream, so a whole run is reproducible from its config.

Paths whose simulation diverged or went non-positive (log-returns would be
undefined) are dropped from the estimate.  If more than 20% of an
iteration's paths are dropped, that iteration still takes its gradient
step but is never recorded as a best-loss improvement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, TrainingError
from .integrator import (
    ModelGradients,
    NansdeModel,
    backpropagate,
    simulate_batch_with_tape,
)
from .neural import init_params
from .noise import Path
from .optim import Adam
from .rng import NoiseSeed

BANDWIDTH_FLOOR = 1e-6
DROP_CAP = 0.2  # max fraction of dropped paths for an iteration to count

DEFAULT_WIDTHS = (1, 20, 1)  # one hidden layer of 20 tanh units


@dataclass(frozen=True)
class TrainConfig:
    """Training schedule; defaults follow the reference setup."""

    seed: NoiseSeed
    m: int = 128
    lr: float = 0.004
    max_iters: int = 1000
    early_stop_patience: int = 200
    kde_floor: float = 1e-12
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"ensemble size must be >= 2, got {self.m}")
        if self.lr <= 0.0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not 0 <= self.early_stop_patience <= self.max_iters:
            raise ValueError(
                f"patience must lie in [0, max_iters], got {self.early_stop_patience}"
            )
        if self.kde_floor <= 0.0:
            raise ValueError(f"kde_floor must be positive, got {self.kde_floor}")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.adam_eps <= 0.0:
            raise ValueError("Adam epsilon must be positive")

    def iteration_seed(self, iteration: int) -> NoiseSeed:
        """Base noise stream of one training iteration (m consecutive streams)."""
        return self.seed.child(iteration * self.m)


@dataclass(frozen=True)
class LogReturnSeries:
    """Log-differences r_t = log(X_{t+1} / X_t) of a positive path."""

    r: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        object.__setattr__(self, "r", r)
        if r.ndim != 1 or r.size == 0:
            raise ValueError(f"returns must be a nonempty vector, got shape {r.shape}")
        if not np.isfinite(r).all():
            raise ValueError("returns must be finite")

    def __len__(self) -> int:
        return self.r.size


def log_returns(path: Path) -> LogReturnSeries:
    """Log-returns of a strictly positive path."""
    values = path.values
    bad = np.flatnonzero(values <= 0.0)
    if bad.size:
        raise DataError(f"non-positive path value at index {bad[0]} (log undefined)")
    return LogReturnSeries(np.log(values[1:] / values[:-1]))


def silverman_bandwidth(samples: np.ndarray) -> float:
    """1.06 std M^{-1/5}, floored so identical samples stay usable."""
    samples = np.asarray(samples, dtype=float)
    h = 1.06 * samples.std() * samples.size ** (-0.2)
    return max(BANDWIDTH_FLOOR, float(h))


def kde_log_density(samples, query: float, floor: float, bandwidth: float | None = None) -> float:
    """Log of the floored Gaussian-KDE density at one query point.

    The bandwidth defaults to the Silverman rule on ``samples``; passing an
    explicit value pins it (used e.g. by finite-difference checks, since
    training treats the bandwidth as a constant).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or samples.size < 2:
        raise ValueError(f"need at least 2 samples, got shape {samples.shape}")
    if floor <= 0.0:
        raise ValueError(f"floor must be positive, got {floor}")
    h = silverman_bandwidth(samples) if bandwidth is None else float(bandwidth)
    z = (query - samples) / h
    density = np.exp(-0.5 * z * z).mean() / (h * math.sqrt(2.0 * math.pi))
    return float(np.log(max(floor, density)))


def _nll(
    r_obs: np.ndarray,
    samples: np.ndarray,
    floor: float,
    bandwidths: np.ndarray | None = None,
    want_grad: bool = False,
) -> tuple[float, np.ndarray | None]:
    """Mean negative log KDE likelihood of r_obs given per-step samples.

    ``samples`` has shape (T, M): row t holds the generated returns at step
    t.  Returns the loss and, if requested, its gradient with respect to
    every sample (bandwidths held constant).
    """
    t_len, m = samples.shape
    if r_obs.shape != (t_len,):
        raise ValueError(f"observed returns {r_obs.shape} do not match samples {samples.shape}")
    if bandwidths is None:
        h = np.maximum(BANDWIDTH_FLOOR, 1.06 * samples.std(axis=1) * m ** (-0.2))
    else:
        h = np.asarray(bandwidths, dtype=float)
        if h.shape != (t_len,):
            raise ValueError(f"need one bandwidth per step, got shape {h.shape}")
    z = (r_obs[:, None] - samples) / h[:, None]
    phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    density = phi.mean(axis=1) / h
    floored = np.maximum(floor, density)
    loss = float(np.mean(-np.log(floored)))
    if not want_grad:
        return loss, None
    active = density > floor
    grad = np.where(
        active[:, None],
        -z * phi / (floored[:, None] * (t_len * m) * h[:, None] ** 2),
        0.0,
    )
    return loss, grad


def _usable_columns(x: np.ndarray, alive: np.ndarray) -> np.ndarray:
    """Paths that stayed alive and strictly positive (log-returns defined)."""
    return alive & (x > 0.0).all(axis=0)


def nll_loss(observed: LogReturnSeries, ensemble, floor: float, bandwidths=None) -> float:
    """The training loss of one observed series against a simulated ensemble.

    Non-positive generated paths are dropped; fewer than two usable paths is
    an error because the KDE needs a spread.
    """
    x = ensemble.values_matrix()
    valid = (x > 0.0).all(axis=0)
    n_valid = int(valid.sum())
    if n_valid < 2:
        raise TrainingError(f"only {n_valid} usable generated paths (need at least 2)")
    returns = np.log(x[1:, valid] / x[:-1, valid])
    loss, _ = _nll(observed.r, returns, floor, bandwidths)
    return loss


@dataclass
class TrainState:
    """Mutable loop state: current and best models, optimizer, bookkeeping."""

    model: NansdeModel
    adam: Adam
    best_model: NansdeModel
    best_loss: float = math.inf
    best_iteration: int = -1
    since_improve: int = 0
    iteration: int = 0
    history: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def _trainable_arrays(model: NansdeModel) -> list[np.ndarray]:
    return [a for name in model.trainable_names() for a in model.net(name).arrays()]


def init_state(
    observed_path: Path,
    cfg: TrainConfig,
    init_seed: int,
    widths=DEFAULT_WIDTHS,
    clamp_ell2: bool = False,
) -> TrainState:
    """Fresh networks, fresh optimizer, start value taken from the data."""
    nets = [init_params(widths, init_seed, tag=tag) for tag in range(4)]
    model = NansdeModel(
        *nets,
        grid=observed_path.grid,
        x0=float(observed_path.values[0]),
        clamp_ell2=clamp_ell2,
    )
    adam = Adam(
        [a.shape for a in _trainable_arrays(model)],
        lr=cfg.lr,
        beta1=cfg.adam_beta1,
        beta2=cfg.adam_beta2,
        eps=cfg.adam_eps,
    )
    return TrainState(model=model, adam=adam, best_model=model.copy())


def loss_and_gradients(
    model: NansdeModel,
    observed: LogReturnSeries,
    cfg: TrainConfig,
    iteration: int,
    bandwidths=None,
) -> tuple[float, ModelGradients, int]:
    """Pathwise loss and full parameter gradient for one iteration's noise.

    Simulates the iteration's ensemble, scores it against the observed
    returns and backpropagates through the fixed increments.  Returns the
    loss, the gradients and the number of usable (fully positive) paths.
    ``bandwidths`` overrides the per-step Silverman bandwidths, which pins
    the KDE smoothing while parameters are perturbed.
    """
    tape = simulate_batch_with_tape(model, cfg.m, cfg.iteration_seed(iteration))
    valid = _usable_columns(tape.x, tape.alive)
    n_valid = int(valid.sum())
    if n_valid < 2:
        raise TrainingError(
            f"iteration {iteration}: only {n_valid} of {cfg.m} generated paths usable"
        )

    xs = tape.x[:, valid]
    returns = np.log(xs[1:] / xs[:-1])
    loss, return_grad = _nll(observed.r, returns, cfg.kde_floor, bandwidths, want_grad=True)

    # Chain through r_t = log X_{t+1} - log X_t into per-state adjoints.
    adj = np.zeros_like(tape.x)
    adj_valid = np.zeros_like(xs)
    adj_valid[1:] += return_grad / xs[1:]
    adj_valid[:-1] -= return_grad / xs[:-1]
    adj[:, valid] = adj_valid
    grads = backpropagate(tape, adj, columns=valid)
    return loss, grads, n_valid


def train_step(state: TrainState, observed: LogReturnSeries, cfg: TrainConfig) -> TrainState:
    """One iteration: simulate, score, backpropagate, Adam-update.

    A non-finite gradient skips the parameter update; an iteration with too
    many dropped paths updates parameters but cannot set a new best loss.
    Either case advances the no-improvement counter.
    """
    i = state.iteration
    model = state.model
    loss, grads, n_valid = loss_and_gradients(model, observed, cfg, i)

    capped = (cfg.m - n_valid) > DROP_CAP * cfg.m
    finite = bool(np.isfinite(loss)) and grads.all_finite()
    if capped:
        state.warnings.append(
            f"iteration {i}: {cfg.m - n_valid}/{cfg.m} paths dropped; not eligible as best"
        )
    if not finite:
        state.warnings.append(f"iteration {i}: non-finite loss or gradient; step skipped")

    if finite and not capped and loss < state.best_loss:
        state.best_loss = loss
        state.best_iteration = i
        state.best_model = model.copy()
        state.since_improve = 0
    else:
        state.since_improve += 1

    state.history.append(loss if finite else math.inf)

    if finite:
        grad_arrays = [
            a for name in model.trainable_names() for a in grads.bundle(name).arrays()
        ]
        state.adam.step(_trainable_arrays(model), grad_arrays)

    state.iteration += 1
    return state


def evaluate_nll(model: NansdeModel, observed: LogReturnSeries, cfg: TrainConfig, iteration: int) -> float:
    """Recompute the loss a given iteration would have seen for this model."""
    tape = simulate_batch_with_tape(model, cfg.m, cfg.iteration_seed(iteration))
    valid = _usable_columns(tape.x, tape.alive)
    if int(valid.sum()) < 2:
        raise TrainingError(f"only {int(valid.sum())} usable paths when re-evaluating")
    xs = tape.x[:, valid]
    returns = np.log(xs[1:] / xs[:-1])
    loss, _ = _nll(observed.r, returns, cfg.kde_floor)
    return loss


def fit(
    observed_path: Path,
    cfg: TrainConfig,
    init_seed: int,
    widths=DEFAULT_WIDTHS,
    clamp_ell2: bool = False,
) -> tuple[NansdeModel, TrainState]:
    """Run the training loop and return the best-loss model with its state.

    Stops after ``max_iters`` iterations or once ``early_stop_patience``
    consecutive iterations pass without improving the best loss (patience 0
    therefore stops after the first iteration).  ``state.history`` holds one
    loss per completed iteration.
    """
    observed = log_returns(observed_path)
    if len(observed) != observed_path.grid.n_steps:
        raise ValueError("observed returns and grid disagree")
    state = init_state(observed_path, cfg, init_seed, widths, clamp_ell2)
    for _ in range(cfg.max_iters):
        train_step(state, observed, cfg)
        if state.since_improve >= cfg.early_stop_patience:
            break
    return state.best_model, state
