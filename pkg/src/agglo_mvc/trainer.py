"""Alternating optimisation: one Adam step on the parameters, then a fresh ``F``.

After every step the consensus graph's component count steers ``lam``:

* fewer than ``k`` components -> accept the step, ``lam = min(lam_max, 2 lam)``
* more than ``k`` -> roll back to the last accepted state, ``lam = lam / 2``
* exactly ``k`` -> stop; the components are the clusters
"""

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import connected_components, laplacian
from .linalg import sym_eigs_smallest
from .model import ANN, ANNLD, MODES, forward, init_params, leaf_distances, value_and_grad
from .structure import validate

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("iteration", "lambda", "components", "eigval_sum", "loss_sc", "loss_gc", "loss_cac", "loss_total")

# per-mode hyper-parameters used in the original experiments
MODE_DEFAULTS = {
    ANN: {"lambda_max": 1e5, "P": 1.13, "lr": 0.05, "r": 10},
    ANNLD: {"lambda_max": 1e7, "P": 1.05, "lr": 0.1, "r": 9},
}


@dataclass(frozen=True)
class TrainerConfig:
    k: int
    mode: str = ANN
    lambda_init: float = 15.0
    lambda_max: float = 1e5
    P: float = 1.13
    lr: float = 0.05
    r: int = 10
    max_iters: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.k < 2:
            raise ValueError(f"k must be at least 2, got {self.k}")
        if self.lambda_init > self.lambda_max:
            raise ValueError(f"lambda_init {self.lambda_init} exceeds lambda_max {self.lambda_max}")
        if self.lambda_init <= 0:
            raise ValueError("lambda_init must be positive")
        if self.r < 1:
            raise ValueError(f"r must be at least 1, got {self.r}")
        if self.P <= 1:
            raise ValueError(f"P must exceed 1, got {self.P}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")

    @classmethod
    def for_mode(cls, mode, k, **overrides):
        """Config with the per-mode defaults, then any non-``None`` overrides."""
        if mode not in MODE_DEFAULTS:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        values = dict(MODE_DEFAULTS[mode])
        values.update({key: v for key, v in overrides.items() if v is not None})
        return cls(k=k, mode=mode, **values)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# ---------------------------------------------------------------- Adam

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    def copy(self):
        return AdamState(m={k: a.copy() for k, a in self.m.items()},
                         v={k: a.copy() for k, a in self.v.items()}, t=self.t)


def adam_step(params, grads, moments, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns new ``(params, moments)``."""
    new_params = params.copy()
    state = moments.copy()
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for ref, value in params.items():
        g = grads.get(ref)
        m = beta1 * state.m.get(ref, 0.0) + (1.0 - beta1) * g
        v = beta2 * state.v.get(ref, 0.0) + (1.0 - beta2) * g * g
        state.m[ref], state.v[ref] = m, v
        new_params.set(ref, value - lr * (m / c1) / (np.sqrt(v / c2) + eps))
    return new_params, state


# ---------------------------------------------------------------- spectral side

def update_F(S_c, k):
    """Eigenvectors of the ``k`` smallest Laplacian eigenvalues and their sum."""
    eig = sym_eigs_smallest(laplacian(S_c), k)
    # LAPACK hands back Fortran order; BLAS rounding depends on layout, and
    # snapshots copy to C order, so pin C order to keep replays bitwise equal
    return np.ascontiguousarray(eig.vectors), float(np.sum(eig.values))


ACCEPT_DOUBLE = "accept_double"
RESTORE_HALVE = "restore_halve"
TERMINATE = "terminate"


def schedule_lambda(lam, component_count, k, lambda_max):
    """Returns ``(action, new_lam)`` for the observed component count."""
    if component_count < 1:
        raise ValueError("component count must be at least 1")
    if component_count == k:
        return TERMINATE, lam
    if component_count > k:
        return RESTORE_HALVE, lam / 2.0
    return ACCEPT_DOUBLE, min(lambda_max, 2.0 * lam)


@dataclass
class Snapshot:
    params: object
    F: np.ndarray
    lam: float
    moments: AdamState
    iteration: int
    S_c: np.ndarray
    eigval_sum: float
    components: int

    def clone(self):
        return Snapshot(self.params.copy(), self.F.copy(), self.lam, self.moments.copy(),
                        self.iteration, self.S_c.copy(), self.eigval_sum, self.components)


@dataclass
class TraceRecord:
    iteration: int
    lam: float
    components: int
    eigval_sum: float
    loss_sc: float
    loss_gc: float
    loss_cac: float
    loss_total: float
    action: str = ""

    def row(self):
        return (self.iteration, self.lam, self.components, self.eigval_sum,
                self.loss_sc, self.loss_gc, self.loss_cac, self.loss_total)


@dataclass(frozen=True)
class TrainResult:
    labels: np.ndarray
    S_c: np.ndarray
    trace: list
    converged: bool
    iterations: int
    config: TrainerConfig | None = None
    params: object = None

    @property
    def components(self):
        return int(self.labels.max()) + 1 if self.labels.size else 0


def write_trace(trace, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for rec in trace:
            writer.writerow([repr(x) if isinstance(x, float) else x for x in rec.row()])


def read_trace(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: trace is missing columns {sorted(missing)}")
        return [
            TraceRecord(int(row["iteration"]), float(row["lambda"]), int(row["components"]),
                        float(row["eigval_sum"]), float(row["loss_sc"]), float(row["loss_gc"]),
                        float(row["loss_cac"]), float(row["loss_total"]))
            for row in reader
        ]


# ---------------------------------------------------------------- main loop

def train_step(state, lam, lr, config, dataset, structure, fixed_D=None):
    """One Adam step from ``state`` followed by a fresh ``F``.

    Pure in its inputs: replaying the same snapshot gives the same candidate.
    Returns ``(candidate, trace_of_the_step_start)``.
    """
    mode, k, P, r = config.mode, config.k, config.P, config.r
    step_trace, grads = value_and_grad(state.params, dataset, structure, mode, P, lam, state.F, r,
                                       D_leaves=fixed_D)
    new_params, new_moments = adam_step(state.params, grads, state.moments, lr)
    new_S = forward(new_params, dataset, structure, mode, P, lam, state.F, r, D_leaves=fixed_D).S_c
    new_F, new_sum = update_F(new_S, k)
    new_count, _ = connected_components(new_S)
    return Snapshot(new_params, new_F, lam, new_moments, state.iteration + 1, new_S, new_sum, new_count), step_trace


def initial_state(config, dataset, structure):
    """Starting snapshot, the fixed ANN leaf distances (``None`` for annld) and the iteration-0 record."""
    mode, k, P, r = config.mode, config.k, config.P, config.r
    fixed_D = leaf_distances(dataset, structure, r)[0] if mode == ANN else None
    params = init_params(dataset, structure, mode, r)
    lam = config.lambda_init
    S_c = forward(params, dataset, structure, mode, P, lam, np.zeros((dataset.n, k)), r, D_leaves=fixed_D).S_c
    F, eig_sum = update_F(S_c, k)
    count, _ = connected_components(S_c)
    start = forward(params, dataset, structure, mode, P, lam, F, r, D_leaves=fixed_D)
    record = TraceRecord(0, lam, count, eig_sum, start.sc, start.gc, start.cac, start.total)
    return Snapshot(params, F, lam, AdamState(), 0, S_c, eig_sum, count), fixed_D, record


def train(config, dataset, structure, callback=None):
    """Run the alternating optimisation until the consensus graph has ``k`` components.

    Stops after ``config.max_iters`` steps otherwise and returns the evaluated
    state whose component count was closest to ``k`` (latest on ties) with
    ``converged=False``.
    """
    structure = validate(structure, dataset)
    if config.r > dataset.n - 1:
        raise ValueError(f"r={config.r} needs at least {config.r + 1} samples, dataset has {dataset.n}")
    if config.k > dataset.n:
        raise ValueError(f"k={config.k} exceeds the sample count {dataset.n}")
    k = config.k
    state, fixed_D, first = initial_state(config, dataset, structure)
    trace = [first]
    lam, count = state.lam, state.components
    best = state
    logger.info("iter 0: %d components (target %d), eigval sum %.3e", count, k, state.eigval_sum)

    converged = count == k
    iteration = 0
    step_scale = 1.0
    if converged:
        trace[0].action = TERMINATE
    while not converged and iteration < config.max_iters:
        iteration += 1
        candidate, step_trace = train_step(state, lam, config.lr * step_scale, config, dataset, structure,
                                           fixed_D)
        candidate.iteration = iteration
        new_count, new_sum = candidate.components, candidate.eigval_sum

        action, new_lam = schedule_lambda(lam, new_count, k, config.lambda_max)
        record = TraceRecord(iteration, lam, new_count, new_sum, step_trace.sc, step_trace.gc,
                             step_trace.cac, step_trace.total, action)
        trace.append(record)
        if abs(new_count - k) <= abs(best.components - k):
            best = candidate
        if action == TERMINATE:
            state, converged = candidate, True
        elif action == RESTORE_HALVE:
            # Adam ignores the overall loss scale, so halving lam alone replays
            # nearly the same step; the step length follows the schedule too
            lam = new_lam
            step_scale /= 2.0
        else:
            lam = new_lam
            step_scale = min(1.0, 2.0 * step_scale)
            state = candidate
            state.lam = lam
        logger.debug("iter %d: lam=%.4g components=%d eigsum=%.3e %s", iteration, record.lam, new_count,
                     new_sum, action)
        if callback is not None:
            callback(record)

    final = state if converged else best
    _, labels = connected_components(final.S_c)
    if converged:
        logger.info("converged after %d iterations with %d components", iteration, k)
    else:
        logger.warning("no %d-component graph after %d iterations; best had %d components",
                       k, iteration, final.components)
    return TrainResult(labels=labels, S_c=final.S_c, trace=trace, converged=converged,
                       iterations=iteration, config=config, params=final.params)
