"""Experiment harnesses: streaming sine regression, point editing, single-pass Split MNIST."""

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from elephant_cl.activations import ActivationSpec
from elephant_cl.autodiff import (
    NonFiniteError,
    OptimizerState,
    adam_step,
    forward_backward,
    forward_backward_fisher,
    rmsprop_step,
)
from elephant_cl.data import load_mnist, make_rng
from elephant_cl.ewc import FisherState, ewc_penalty, fisher_update
from elephant_cl.models import InitSpec, build_model, predict
from elephant_cl.ntk import ntk_profile

METRICS_HEADER = ("step", "train_loss", "test_metric", "seed", "wall_clock_ms")
AGGREGATE_HEADER = ("config_id", "mean", "stderr", "n_seeds")


class StreamExhausted(RuntimeError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, step, records, cause=None):
        self.step = step
        self.records = records
        super().__init__(f"training diverged at step {step}: {cause}")


class TaskStream:
    """An ordered sample sequence that hands out each sample exactly once.

    There is no rewind: ``take`` advances a cursor, and the per-sample delivery
    counts are kept so callers can prove the single-pass guarantee.
    """

    pass_limit = 1

    def __init__(self, inputs, targets):
        inputs = np.array(inputs, dtype=np.float64)
        targets = np.array(targets)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        if inputs.shape[0] != targets.shape[0]:
            raise ValueError(f"{inputs.shape[0]} inputs but {targets.shape[0]} targets")
        inputs.setflags(write=False)
        targets.setflags(write=False)
        self._inputs = inputs
        self._targets = targets
        self._deliveries = np.zeros(inputs.shape[0], dtype=np.int64)
        self.cursor = 0

    def __len__(self):
        return self._inputs.shape[0]

    @property
    def remaining(self):
        return len(self) - self.cursor

    @property
    def deliveries(self):
        return self._deliveries.copy()

    def peek_all(self):
        """Read-only view of every sample, for inspection; does not consume."""
        return self._inputs, self._targets

    def take(self, k=1):
        if self.remaining == 0:
            raise StreamExhausted("stream already consumed")
        lo, hi = self.cursor, min(self.cursor + k, len(self))
        self.cursor = hi
        self._deliveries[lo:hi] += 1
        return self._inputs[lo:hi], self._targets[lo:hi]

    def batches(self, k):
        while self.remaining:
            yield self.take(k)


def concat_streams(streams):
    """Join unconsumed streams into one flat stream; task identity is not carried over."""
    if any(s.cursor for s in streams):
        raise ValueError("cannot concatenate a partially consumed stream")
    xs, ys = zip(*(s.peek_all() for s in streams))
    return TaskStream(np.concatenate(xs), np.concatenate(ys))


@dataclass
class EvalSet:
    inputs: np.ndarray
    targets: np.ndarray
    metric: str

    def __post_init__(self):
        if len(self.targets) == 0:
            raise ValueError("evaluation set is empty")
        if self.metric not in ("mse", "accuracy"):
            raise ValueError(f"unknown metric {self.metric!r}")

    def evaluate(self, params, classes=None):
        """Test MSE, or accuracy (optionally only over samples and logits of ``classes``)."""
        inputs, targets = self.inputs, self.targets
        if classes is not None:
            if self.metric != "accuracy":
                raise ValueError("class restriction only applies to accuracy")
            keep = np.isin(targets, classes)
            inputs, targets = inputs[keep], np.asarray(targets)[keep]
        out = predict(params, inputs)
        if self.metric == "mse":
            y = np.asarray(targets, dtype=np.float64).reshape(out.shape)
            return float(np.mean((out - y) ** 2))
        return accuracy(out, targets, classes)


def accuracy(logits, labels, classes=None):
    """Argmax accuracy; ties go to the lowest class index.

    With ``classes`` the argmax runs over those logits only.
    """
    labels = np.asarray(labels)
    if classes is None:
        return float(np.mean(np.argmax(logits, axis=1) == labels))
    classes = np.sort(np.asarray(classes))
    picked = classes[np.argmax(logits[:, classes], axis=1)]
    return float(np.mean(picked == labels))


@dataclass
class MetricsRecord:
    step: int
    train_loss: float
    test_metric: float
    seed: int
    wall_clock_ms: Optional[float] = None


@dataclass
class RunResult:
    records: list
    params: object
    extras: dict = field(default_factory=dict)

    @property
    def final_metric(self):
        return self.records[-1].test_metric


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in records:
            w.writerow([_fmt(r.step), _fmt(r.train_loss), _fmt(r.test_metric), _fmt(r.seed), _fmt(r.wall_clock_ms)])


def read_metrics_csv(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(MetricsRecord(
                step=int(row["step"]),
                train_loss=float(row["train_loss"]),
                test_metric=float(row["test_metric"]),
                seed=int(row["seed"]),
                wall_clock_ms=float(row["wall_clock_ms"]) if row["wall_clock_ms"] else None,
            ))
    return out


def mean_stderr(values):
    """Mean and standard error (sample std / sqrt(n)); stderr is nan for one value."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("no values to aggregate")
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
    return float(np.mean(v)), se


def write_aggregate_csv(rows, path):
    """``rows`` are ``(config_id, [final metrics per seed])`` pairs."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_HEADER)
        for config_id, values in rows:
            mean, se = mean_stderr(values)
            w.writerow([config_id, repr(mean), repr(se), len(values)])


# -- shared training plumbing -------------------------------------------------

def make_model(cfg, seed, head="linear"):
    m = cfg.model
    act = ActivationSpec(m.activation.kind, m.activation.a, m.activation.d)
    return build_model(m.n, m.m, m.o, act, InitSpec(sigma_bias=m.sigma_bias, seed=seed), head=head)


def _optimizer_step(params, grads, state, opt):
    if opt.kind == "adam":
        adam_step(params, grads, state, opt.lr)
    else:
        rmsprop_step(params, grads, state, opt.lr, opt.decay)


class _Clock:
    def __init__(self, enabled):
        self.enabled = enabled
        self.t0 = time.perf_counter()

    def ms(self):
        return (time.perf_counter() - self.t0) * 1000.0 if self.enabled else None


# -- streaming sine regression ------------------------------------------------

def gen_sine_stream(n=200, seed=0, spacing="even"):
    """``n`` strictly increasing inputs on [0, 2] with targets ``sin(pi x)``.

    ``spacing="even"`` places them on ``linspace(0, 2, n)`` (``seed`` unused);
    ``"random"`` sorts uniform draws from PCG64(seed).
    """
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    if spacing == "even":
        x = np.linspace(0.0, 2.0, n)
    elif spacing == "random":
        rng = make_rng(seed)
        x = np.sort(rng.uniform(0.0, 2.0, n))
        while np.any(np.diff(x) <= 0):
            x = np.sort(rng.uniform(0.0, 2.0, n))
    else:
        raise ValueError(f"unknown spacing {spacing!r}")
    return TaskStream(x[:, None], np.sin(np.pi * x)[:, None])


def sine_test_set(n_test=1000):
    x = np.linspace(0.0, 2.0, n_test)
    return EvalSet(x[:, None], np.sin(np.pi * x)[:, None], "mse")


def run_streaming_regression(cfg, seed=None, on_step=None):
    """Single pass over the sine stream with ``E`` Adam updates per arriving batch.

    After each arrival the test MSE on the evenly spaced test grid is recorded.
    ``train_loss`` is the arriving batch's loss before any update on it.
    ``on_step(step, params, x_t)`` runs after each arrival's updates.
    """
    seed = cfg.seeds[0] if seed is None else seed
    if cfg.model.o != 1:
        raise ValueError("streaming regression needs a scalar-output model")
    stream = gen_sine_stream(cfg.sine.n_train, seed, cfg.sine.spacing)
    test = sine_test_set(cfg.sine.n_test)
    params = make_model(cfg, seed)
    state = OptimizerState.for_params(params, cfg.optimizer.kind)
    clock = _Clock(cfg.timing)
    records = []
    step = 0
    try:
        for X, Y in stream.batches(cfg.batch):
            step += 1
            arrival, grads = forward_backward(params, X, Y, "squared_error")
            for e in range(cfg.E):
                if e:
                    _, grads = forward_backward(params, X, Y, "squared_error")
                _optimizer_step(params, grads, state, cfg.optimizer)
            mse = test.evaluate(params)
            if not math.isfinite(mse):
                raise NonFiniteError("test predictions")
            records.append(MetricsRecord(step, arrival, mse, seed, clock.ms()))
            if on_step is not None:
                on_step(step, params, X[-1])
    except NonFiniteError as exc:
        raise DivergenceError(step, records, exc) from exc
    return RunResult(records, params, {"deliveries": stream.deliveries})


def streaming_ntk_profiles(cfg, seed=None, steps=None, grid=None):
    """Train on the sine stream and capture the kernel profile anchored at x_t at ``steps``."""
    steps = set(cfg.ntk.profile_steps if steps is None else steps)
    grid = np.linspace(0.0, 2.0, cfg.ntk.grid_points) if grid is None else np.asarray(grid)
    profiles = {}

    def capture(step, params, x_t):
        if step in steps:
            profiles[step] = ntk_profile(params, x_t, list(grid[:, None]),
                                         activation=params.activation.kind, step=step)

    result = run_streaming_regression(cfg, seed, on_step=capture)
    result.extras["profiles"] = profiles
    return result


def far_kernel_max(profile, radius):
    """Largest normalized |NTK| over grid points farther than ``radius`` from the anchor."""
    dist = np.array([np.linalg.norm(p - profile.anchor) for p in profile.grid])
    far = dist > radius
    if not far.any():
        return 0.0
    return float(np.max(np.abs(profile.normalized_values[far])))


# -- point editing ------------------------------------------------------------

@dataclass
class EditResult:
    grid: np.ndarray
    before: np.ndarray
    after: np.ndarray
    inside_max: float
    outside_max: float
    steps: int
    converged: bool
    pretrain_mse: float
    pretrain_epochs: int


def pretrain_sine(cfg, seed):
    """Conventional iid training: shuffled mini-batches, many epochs, Adam.

    Stops at the first epoch whose test MSE reaches ``edit.pretrain_target_mse``.
    """
    ec = cfg.edit
    x = np.linspace(0.0, 2.0, cfg.sine.n_train)[:, None]
    y = np.sin(np.pi * x)
    test = sine_test_set(cfg.sine.n_test)
    params = make_model(cfg, seed)
    state = OptimizerState.for_params(params, "adam")
    rng = make_rng(seed + 7919)
    mse = test.evaluate(params)
    epoch = 0
    while epoch < ec.pretrain_epochs and mse > ec.pretrain_target_mse:
        epoch += 1
        order = rng.permutation(len(x))
        for lo in range(0, len(x), ec.pretrain_batch):
            idx = order[lo:lo + ec.pretrain_batch]
            _, grads = forward_backward(params, x[idx], y[idx], "squared_error")
            adam_step(params, grads, state, ec.pretrain_lr)
        mse = test.evaluate(params)
    return params, mse, epoch


def edit_point(params, x, y_new, lr, tolerance, max_steps):
    """Plain gradient descent on the single sample ``(x, y_new)`` until within ``tolerance``.

    Gradient descent keeps each step's effect on other inputs proportional to
    the NTK; the step is ``lr / ntk(x, x)`` so that ``lr`` is dimensionless.
    """
    X = np.array([[x]], dtype=np.float64)
    Y = np.array([[y_new]], dtype=np.float64)
    steps = 0
    while steps < max_steps:
        if abs(float(predict(params, X)[0, 0]) - y_new) <= tolerance:
            return steps, True
        loss, grads = forward_backward(params, X, Y, "squared_error")
        kernel = grads.dot(grads) / (4.0 * loss) if loss > 0 else 0.0
        if kernel <= 0:
            return steps, False
        eta = lr / kernel
        for p, g in zip(params.arrays().values(), grads.arrays().values()):
            p -= eta * g
        steps += 1
    return steps, abs(float(predict(params, X)[0, 0]) - y_new) <= tolerance


def run_edit_experiment(cfg, seed=None, params=None):
    """Pretrain to convergence, then overwrite the prediction at one input and measure spillover."""
    seed = cfg.seeds[0] if seed is None else seed
    ec = cfg.edit
    if params is None:
        params, pre_mse, epochs = pretrain_sine(cfg, seed)
    else:
        pre_mse, epochs = sine_test_set(cfg.sine.n_test).evaluate(params), 0
    grid = np.linspace(0.0, 2.0, cfg.sine.n_test)
    before = predict(params, grid[:, None])[:, 0]
    edited = params.copy()
    steps, ok = edit_point(edited, ec.x, ec.y_new, ec.lr, ec.tolerance, ec.max_steps)
    after = predict(edited, grid[:, None])[:, 0]
    delta = np.abs(after - before)
    inside = np.abs(grid - ec.x) <= ec.window
    return EditResult(
        grid=grid,
        before=before,
        after=after,
        inside_max=float(delta[inside].max()) if inside.any() else 0.0,
        outside_max=float(delta[~inside].max()) if (~inside).any() else 0.0,
        steps=steps,
        converged=ok,
        pretrain_mse=float(pre_mse),
        pretrain_epochs=epochs,
    )


# -- class-incremental Split MNIST ----------------------------------------------

def split_by_class(dataset, classes_per_task=2, class_order=None, seed=0):
    """One stream per group of ``classes_per_task`` labels, in ``class_order``.

    Each task holds every sample of its classes, shuffled with PCG64(seed + task).
    """
    labels = np.asarray(dataset.labels)
    present = set(np.unique(labels).tolist())
    order = list(range(10)) if class_order is None else list(class_order)
    unknown = present - set(order)
    if unknown or len(set(order)) != len(order):
        raise ValueError(f"class_order {order} does not cover labels {sorted(present)} exactly once")
    if len(order) % classes_per_task:
        raise ValueError(f"{classes_per_task} classes per task does not divide {len(order)} classes")
    streams = []
    for t in range(len(order) // classes_per_task):
        group = order[t * classes_per_task:(t + 1) * classes_per_task]
        idx = np.flatnonzero(np.isin(labels, group))
        idx = idx[make_rng(seed + t).permutation(idx.size)]
        streams.append(TaskStream(dataset.inputs[idx], labels[idx]))
    return streams


def _eval_schedule(n_batches, points, every):
    if every:
        return set(range(1, n_batches + 1))
    return {max(1, round(k * n_batches / points)) for k in range(1, points + 1)} | {n_batches}


def run_class_incremental(cfg, seed=None, train=None, test=None):
    """One pass of mini-batches over the concatenated task streams.

    The loop only sees the flat stream. Every mini-batch gets ``E`` optimizer
    updates (plus the streaming EWC penalty when configured), then the Fisher
    estimate and anchor are refreshed from the per-sample task-loss gradients
    of the last update.
    Accuracy over all classes is recorded at evenly spaced points and at the end.
    """
    seed = cfg.seeds[0] if seed is None else seed
    mc = cfg.mnist
    if train is None:
        train = load_mnist(mc.data_root, "train")
    if test is None:
        test = load_mnist(mc.data_root, "test")
    tasks = split_by_class(train, mc.classes_per_task, mc.class_order, seed)
    stream = concat_streams(tasks)
    evalset = EvalSet(test.inputs, test.labels, "accuracy")
    params = make_model(cfg, seed, head="logits")
    state = OptimizerState.for_params(params, cfg.optimizer.kind)
    fisher = FisherState.start(params, cfg.ewc.gamma, cfg.ewc.lam) if cfg.ewc else None
    n_batches = math.ceil(len(stream) / cfg.batch)
    schedule = _eval_schedule(n_batches, mc.eval_points, mc.eval_every_batch)
    clock = _Clock(cfg.timing)
    records, losses = [], []
    step = 0
    try:
        for X, Y in stream.batches(cfg.batch):
            step += 1
            fb = forward_backward_fisher if fisher is not None else forward_backward
            out = fb(params, X, Y, "softmax_cross_entropy")
            losses.append(out[0])
            for e in range(cfg.E):
                if e:
                    out = fb(params, X, Y, "softmax_cross_entropy")
                total = out[1]
                if fisher is not None:
                    _, pen = ewc_penalty(params, fisher)
                    total = total + pen
                _optimizer_step(params, total, state, cfg.optimizer)
            if fisher is not None:
                fisher_update(fisher, out[1], params, sq_grads=out[2])
            if step in schedule:
                acc = evalset.evaluate(params)
                records.append(MetricsRecord(step, float(np.mean(losses)), acc, seed, clock.ms()))
                losses = []
    except NonFiniteError as exc:
        raise DivergenceError(step, records, exc) from exc
    return RunResult(records, params, {"deliveries": stream.deliveries, "n_batches": n_batches})
