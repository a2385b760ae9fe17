"""Neural reference generators.

* :class:`MlpNetwork` - tanh hidden layers, identity output, trained with
  Levenberg-Marquardt (:func:`lm_train`) and validation early stopping.
* :func:`ann_minimize_input` - gradient descent on a trained network's
  output with respect to its inputs.
* :class:`LstmCell` - single-layer LSTM whose linear readout is the
  per-step reference-angle increment, trained by full BPTT.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import scenarios
from .blend import brute_force_weights
from .errors import (
    InvalidInputError,
    NumericFailure,
    OptimizationFailure,
    SimulationAbort,
    UndefinedCorrelationError,
)
from .network import run_simulation

TRAIN, VAL, TEST = 0, 1, 2
SPLIT_NAMES = {"train": TRAIN, "val": VAL, "test": TEST}


# --- multilayer perceptron ------------------------------------------------


@dataclass(frozen=True)
class MlpNetwork:
    layer_sizes: tuple
    weights: tuple  # per layer, shape (n_out, n_in)
    biases: tuple
    # fixed affine maps applied before the first and after the last layer
    in_offset: np.ndarray = None
    in_scale: np.ndarray = None
    out_offset: np.ndarray = None
    out_scale: np.ndarray = None

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise InvalidInputError("need at least input and output layer sizes, all positive")
        ws = tuple(np.asarray(w, dtype=float) for w in self.weights)
        bs = tuple(np.asarray(b, dtype=float) for b in self.biases)
        if len(ws) != len(sizes) - 1 or len(bs) != len(ws):
            raise InvalidInputError("one weight matrix and bias vector per layer")
        for k, (w, b) in enumerate(zip(ws, bs)):
            if w.shape != (sizes[k + 1], sizes[k]) or b.shape != (sizes[k + 1],):
                raise InvalidInputError(f"layer {k} shapes {w.shape}, {b.shape} do not match {sizes}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InvalidInputError("network parameters must be finite")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        defaults = {
            "in_offset": np.zeros(sizes[0]),
            "in_scale": np.ones(sizes[0]),
            "out_offset": np.zeros(sizes[-1]),
            "out_scale": np.ones(sizes[-1]),
        }
        for name, default in defaults.items():
            v = getattr(self, name)
            v = default if v is None else np.asarray(v, dtype=float)
            if v.shape != default.shape:
                raise InvalidInputError(f"{name} has shape {v.shape}, expected {default.shape}")
            object.__setattr__(self, name, v)

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flat_params(self):
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def with_params(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise InvalidInputError(f"expected {self.n_params} parameters, got {theta.shape}")
        ws, bs, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(theta[pos : pos + w.size].reshape(w.shape))
            pos += w.size
            bs.append(theta[pos : pos + b.size].copy())
            pos += b.size
        return replace(self, weights=tuple(ws), biases=tuple(bs))

    @classmethod
    def initialize(cls, layer_sizes, seed=0, **scaling):
        rng = np.random.default_rng(seed)
        ws, bs = [], []
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            ws.append(rng.normal(0.0, 1.0 / math.sqrt(n_in), size=(n_out, n_in)))
            bs.append(rng.normal(0.0, 0.1, size=n_out))
        return cls(tuple(layer_sizes), tuple(ws), tuple(bs), **scaling)


def _as_batch(net, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.ndim != 2 or xb.shape[1] != net.layer_sizes[0]:
        raise InvalidInputError(f"input has {xb.shape[-1]} features, network expects {net.layer_sizes[0]}")
    return xb, single


def _forward_layers(net, xb):
    acts = [(xb - net.in_offset) / net.in_scale]
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ w.T + b
        acts.append(z if k == last else np.tanh(z))
    return acts


def mlp_forward(net, x):
    """Layered affine+tanh forward pass; accepts one sample or a batch."""
    xb, single = _as_batch(net, x)
    y = _forward_layers(net, xb)[-1] * net.out_scale + net.out_offset
    return y[0] if single else y


def _output_jacobian(net, xb):
    """d(output)/d(params), rows ordered sample-major then output."""
    acts = _forward_layers(net, xb)
    n, n_out = xb.shape[0], net.layer_sizes[-1]
    jac = np.zeros((n, n_out, net.n_params))
    offsets = []
    pos = 0
    for w, b in zip(net.weights, net.biases):
        offsets.append(pos)
        pos += w.size + b.size
    for o in range(n_out):
        delta = np.zeros((n, n_out))
        delta[:, o] = net.out_scale[o]
        for k in range(len(net.weights) - 1, -1, -1):
            w = net.weights[k]
            a_prev = acts[k]
            pos = offsets[k]
            jac[:, o, pos : pos + w.size] = (delta[:, :, None] * a_prev[:, None, :]).reshape(n, -1)
            jac[:, o, pos + w.size : pos + w.size + w.shape[0]] = delta
            if k > 0:
                delta = (delta @ w) * (1.0 - a_prev**2)
    return jac.reshape(n * n_out, -1)


def mlp_jacobian(net, x):
    """Jacobian of residuals ``target - output`` w.r.t. all parameters."""
    xb, _ = _as_batch(net, x)
    if xb.shape[0] == 0:
        raise InvalidInputError("empty batch")
    return -_output_jacobian(net, xb)


def mlp_input_gradient(net, x, output=0):
    """Gradient of one output with respect to the (unscaled) inputs."""
    xb, _ = _as_batch(net, x)
    acts = _forward_layers(net, xb)
    delta = np.zeros((xb.shape[0], net.layer_sizes[-1]))
    delta[:, output] = net.out_scale[output]
    for k in range(len(net.weights) - 1, -1, -1):
        delta = delta @ net.weights[k]
        if k > 0:
            delta = delta * (1.0 - acts[k] ** 2)
    g = delta / net.in_scale
    return g[0] if np.asarray(x).ndim == 1 else g


# --- data -------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    split: np.ndarray
    feature_names: tuple = ()

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        y = np.asarray(self.targets, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        s = np.asarray(self.split, dtype=int)
        if x.shape[0] != y.shape[0] or s.shape != (x.shape[0],):
            raise InvalidInputError("inputs, targets and split must have equal row counts")
        if not set(np.unique(s)) <= {TRAIN, VAL, TEST}:
            raise InvalidInputError("split labels must be 0 (train), 1 (val) or 2 (test)")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "split", s)

    def part(self, which):
        if which in (None, "all"):
            return self.inputs, self.targets
        idx = SPLIT_NAMES[which] if isinstance(which, str) else which
        m = self.split == idx
        return self.inputs[m], self.targets[m]

    def require_all_splits(self):
        for name, idx in SPLIT_NAMES.items():
            if not np.any(self.split == idx):
                raise InvalidInputError(f"{name} split is empty")

    @classmethod
    def from_arrays(cls, inputs, targets, fractions=(0.70, 0.15, 0.15), seed=0, feature_names=()):
        """Random train/val/test assignment with the given fractions."""
        n = np.asarray(inputs).shape[0]
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise InvalidInputError("split fractions must sum to 1")
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n)
        n_tr = int(round(fractions[0] * n))
        n_va = int(round(fractions[1] * n))
        split = np.full(n, TEST)
        split[perm[:n_tr]] = TRAIN
        split[perm[n_tr : n_tr + n_va]] = VAL
        ds = cls(inputs, targets, split, tuple(feature_names))
        ds.require_all_splits()
        return ds


DATASET_FEATURES = (
    "load_pu",
    "event_pu",
    "x_th_pu",
    "grid_connected",
    "p_mean_pu",
    "v_mean_pu",
    "p_prev_pu",
    "time_since_event_s",
)


def _load_level(scenario, t):
    g = 1.0 / scenario.load_r if scenario.load_r else 0.0
    for ev in scenario.events:
        if ev.time <= t + 1e-12:
            if ev.kind in ("load_surge", "overload"):
                g += ev.magnitude
            elif ev.kind == "load_drop":
                g -= ev.magnitude
    return g


def _case_rows(case, window):
    """Feature rows and blended-frequency targets for one study case."""
    freq, spec, _ = scenarios.controller_traces(case)
    w = brute_force_weights(freq, spec)
    tr = run_simulation(case.blend_units(w), case.grid, case.scenario)
    u = tr.unit("gfm")
    dt = case.scenario.dt
    per = max(1, int(round(window / dt)))
    ev = case.scenario.events[0] if case.scenario.events else None
    rows, targets, increments = [], [], []
    for end in range(2 * per, tr.t.size, per):
        t = tr.t[end]
        cur = slice(end - per + 1, end + 1)
        prev = slice(end - 2 * per + 1, end - per + 1)
        since = t - ev.time if ev is not None and t >= ev.time else -1.0
        rows.append(
            [
                _load_level(case.scenario, t),
                ev.magnitude if ev is not None and since >= 0 else 0.0,
                case.grid.x_th,
                float(tr.connected[end]),
                float(np.mean(u["p"][cur])),
                float(np.mean(u["v"][cur])),
                float(np.mean(u["p"][prev])),
                since,
            ]
        )
        targets.append(u["omega"][end])
        # angle gained over the window beyond the nominal rotation
        increments.append(u["theta"][end] - u["theta"][end - per] - case.omega_target * (t - tr.t[end - per]))
    return rows, targets, increments


def generate_dataset(cases, window=0.1, fractions=(0.70, 0.15, 0.15), seed=0, skipped=None):
    """Simulate each study case with its brute-force-optimal blend and tabulate it.

    Every ``window`` seconds of the blended run gives one row of
    :data:`DATASET_FEATURES`; the target is the blended angular frequency
    (rad/s) at the end of the window.  Cases whose simulation aborts are
    left out and appended to ``skipped`` as ``(name, error)`` when given.
    """
    cases = list(cases)
    if not cases:
        raise InvalidInputError("need at least one scenario")
    xs, ys = [], []
    for case in cases:
        try:
            rows, targets, _ = _case_rows(case, window)
        except SimulationAbort as exc:
            if skipped is not None:
                skipped.append((case.name, exc))
            continue
        xs.extend(rows)
        ys.extend(targets)
    if not xs:
        raise InvalidInputError("every scenario failed to simulate")
    return Dataset.from_arrays(np.array(xs), np.array(ys), fractions, seed, DATASET_FEATURES)


def generate_sequences(cases, window=0.1, skipped=None):
    """Per-case feature sequences paired with reference-angle increments (rad).

    The increment is the blended angle gained over each window minus the
    nominal rotation, so a flat run yields zeros.
    """
    seqs = []
    for case in cases:
        try:
            rows, _, inc = _case_rows(case, window)
        except SimulationAbort as exc:
            if skipped is not None:
                skipped.append((case.name, exc))
            continue
        seqs.append((np.array(rows), np.array(inc)))
    if not seqs:
        raise InvalidInputError("every scenario failed to simulate")
    return seqs


# --- Levenberg-Marquardt ----------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    mu_init: float = 1e-3
    mu_inc: float = 10.0
    mu_dec: float = 0.1
    mu_max: float = 1e10
    max_epochs: int = 1000
    val_patience: int = 6
    split: tuple = (0.70, 0.15, 0.15)
    seed: int = 0
    max_mu_escalations: int = 20
    min_grad: float = 1e-12
    goal: float = 0.0

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise InvalidInputError("split fractions must sum to 1")
        if self.val_patience < 1:
            raise InvalidInputError("val_patience must be >= 1")
        if not (self.mu_dec < 1.0 < self.mu_inc) or self.mu_dec <= 0:
            raise InvalidInputError("need 0 < mu_dec < 1 < mu_inc")
        if self.mu_init < 0:
            raise InvalidInputError("mu_init must be non-negative")


class EarlyStopping:
    """Counts consecutive rises of the validation error."""

    def __init__(self, patience):
        self.patience = patience
        self.previous = None
        self.fails = 0

    def update(self, val_err):
        if self.previous is not None and val_err > self.previous:
            self.fails += 1
        else:
            self.fails = 0
        self.previous = val_err
        return self.fails >= self.patience


@dataclass
class TrainRecord:
    epochs: list = field(default_factory=list)  # (epoch, train_err, val_err, mu)
    mu_steps: list = field(default_factory=list)  # (epoch, mu_tried, accepted)
    stop_reason: str = ""
    best_epoch: int = 0

    @property
    def train_err(self):
        return [e[1] for e in self.epochs]

    @property
    def val_err(self):
        return [e[2] for e in self.epochs]


def _mse(net, x, y):
    if x.shape[0] == 0:
        return float("nan")
    return float(np.mean((y - mlp_forward(net, x)) ** 2))


def lm_step(net, x, y, mu):
    """Solve ``(J'J + mu I) d = J' r`` for output Jacobian ``J`` and residual ``r``."""
    jy = _output_jacobian(net, x)
    r = (y - mlp_forward(net, x)).ravel()
    h = jy.T @ jy
    g = jy.T @ r
    a = h + mu * np.eye(h.shape[0])
    try:
        d = np.linalg.solve(a, g)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"singular damped normal equations at mu={mu:g}") from exc
    if not np.all(np.isfinite(d)):
        raise NumericFailure(f"non-finite LM step at mu={mu:g}")
    return d, g


def lm_train(net, data, cfg=TrainConfig()):
    """Levenberg-Marquardt with adaptive damping and validation early stopping.

    Returns ``(net, record)`` where ``net`` holds the parameters from the epoch
    with the lowest validation error.
    """
    data.require_all_splits()
    xt, yt = data.part("train")
    xv, yv = data.part("val")
    rec = TrainRecord()
    mu = cfg.mu_init
    stopper = EarlyStopping(cfg.val_patience)
    e_train = _mse(net, xt, yt)
    e_val = _mse(net, xv, yv)
    stopper.update(e_val)
    rec.epochs.append((0, e_train, e_val, mu))
    best = (e_val, 0, net)
    rec.stop_reason = "max_epochs"
    for epoch in range(1, cfg.max_epochs + 1):
        if e_train <= cfg.goal:
            rec.stop_reason = "goal"
            break
        theta = net.flat_params()
        accepted = False
        for _ in range(cfg.max_mu_escalations + 1):
            try:
                d, g = lm_step(net, xt, yt, mu)
            except NumericFailure as exc:
                raise NumericFailure(str(exc), epoch=epoch) from exc
            if np.linalg.norm(g) < cfg.min_grad:
                rec.stop_reason = "min_grad"
                break
            cand = net.with_params(theta + d)
            e_new = _mse(cand, xt, yt)
            if e_new < e_train:
                rec.mu_steps.append((epoch, mu, True))
                net, e_train = cand, e_new
                mu *= cfg.mu_dec
                accepted = True
                break
            rec.mu_steps.append((epoch, mu, False))
            mu *= cfg.mu_inc
            if mu > cfg.mu_max:
                rec.stop_reason = "mu_max"
                break
        if not accepted:
            if rec.stop_reason == "max_epochs":
                rec.stop_reason = "mu_escalation_limit"
            break
        e_val = _mse(net, xv, yv)
        rec.epochs.append((epoch, e_train, e_val, mu))
        if e_val < best[0]:
            best = (e_val, epoch, net)
        if stopper.update(e_val):
            rec.stop_reason = "validation"
            break
    rec.best_epoch = best[1]
    return best[2], rec


def regression_coefficient(net, data, split="all"):
    """Pearson correlation between predictions and targets on one split."""
    x, y = data.part(split)
    if x.shape[0] == 0:
        raise InvalidInputError(f"split {split!r} is empty")
    pred = mlp_forward(net, x).ravel()
    y = y.ravel()
    if np.std(y) == 0 or np.std(pred) == 0:
        raise UndefinedCorrelationError("correlation undefined for constant targets or predictions")
    return float(np.corrcoef(pred, y)[0, 1])


# --- input-space minimiser -------------------------------------------------


@dataclass(frozen=True)
class MinimizeConfig:
    max_steps: int = 1000
    grad_tol: float = 1e-8
    step0: float = 1.0
    output: int = 0
    max_halvings: int = 60
    divergence_steps: int = 10


def ann_minimize_input(net, x0, frozen_mask=None, cfg=MinimizeConfig()):
    """Minimise one network output over the unfrozen inputs.

    Steepest descent with Barzilai-Borwein trial steps and Armijo
    backtracking; stops when the free gradient norm falls below
    ``cfg.grad_tol`` or after ``cfg.max_steps`` steps.
    """
    x = np.array(x0, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise InvalidInputError("x0 must be a finite feature vector")
    free = np.ones_like(x, dtype=bool) if frozen_mask is None else ~np.asarray(frozen_mask, dtype=bool)
    if not free.any():
        return x

    def value(z):
        return float(mlp_forward(net, z)[cfg.output])

    fx = value(x)
    step = cfg.step0
    rises = 0
    x_prev = g_prev = None
    for _ in range(cfg.max_steps):
        g = mlp_input_gradient(net, x, cfg.output) * free
        gn = float(np.linalg.norm(g))
        if gn < cfg.grad_tol:
            break
        if g_prev is not None:
            # Barzilai-Borwein trial step from the last secant pair
            s, yv = x - x_prev, g - g_prev
            sy = float(s @ yv)
            step = float(s @ s) / sy if sy > 0 else min(2.0 * step, 1e3 * cfg.step0)
        t = step
        for _ in range(cfg.max_halvings):
            cand = x - t * g
            fc = value(cand)
            if fc <= fx - 1e-4 * t * gn * gn:
                break
            t *= 0.5
        else:
            break  # no descent possible at machine precision
        rises = rises + 1 if fc > fx else 0
        if rises >= cfg.divergence_steps:
            raise OptimizationFailure("network output rose on consecutive accepted steps")
        x_prev, g_prev = x, g
        x, fx = cand, fc
        step = t
    return x


# --- LSTM -------------------------------------------------------------------


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class LstmCell:
    """Gate rows are stacked input, forget, output, candidate."""

    input_size: int
    hidden_size: int
    w: np.ndarray  # (4H, I + H)
    b: np.ndarray  # (4H,)
    w_out: np.ndarray  # (H,)
    b_out: float = 0.0

    def __post_init__(self):
        h, i = int(self.hidden_size), int(self.input_size)
        if h < 1 or i < 1:
            raise InvalidInputError("sizes must be positive")
        w = np.asarray(self.w, dtype=float)
        b = np.asarray(self.b, dtype=float)
        wo = np.asarray(self.w_out, dtype=float)
        if w.shape != (4 * h, i + h) or b.shape != (4 * h,) or wo.shape != (h,):
            raise InvalidInputError("LSTM parameter shapes inconsistent with sizes")
        if not all(np.all(np.isfinite(a)) for a in (w, b, wo)) or not math.isfinite(self.b_out):
            raise InvalidInputError("LSTM parameters must be finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "w_out", wo)
        object.__setattr__(self, "b_out", float(self.b_out))
        object.__setattr__(self, "input_size", i)
        object.__setattr__(self, "hidden_size", h)

    @classmethod
    def initialize(cls, input_size, hidden_size, seed=0):
        rng = np.random.default_rng(seed)
        s = 1.0 / math.sqrt(input_size + hidden_size)
        w = rng.uniform(-s, s, size=(4 * hidden_size, input_size + hidden_size))
        b = np.zeros(4 * hidden_size)
        b[hidden_size : 2 * hidden_size] = 1.0  # forget-gate bias
        w_out = rng.uniform(-s, s, size=hidden_size)
        return cls(input_size, hidden_size, w, b, w_out, 0.0)

    @classmethod
    def zeros(cls, input_size, hidden_size):
        h = hidden_size
        return cls(input_size, h, np.zeros((4 * h, input_size + h)), np.zeros(4 * h), np.zeros(h), 0.0)

    def flat_params(self):
        return np.concatenate([self.w.ravel(), self.b, self.w_out, [self.b_out]])

    def with_params(self, theta):
        theta = np.asarray(theta, dtype=float)
        nw, nb, h = self.w.size, self.b.size, self.hidden_size
        if theta.shape != (nw + nb + h + 1,):
            raise InvalidInputError("wrong parameter count for this cell")
        return replace(
            self,
            w=theta[:nw].reshape(self.w.shape),
            b=theta[nw : nw + nb].copy(),
            w_out=theta[nw + nb : nw + nb + h].copy(),
            b_out=float(theta[-1]),
        )


@dataclass
class LstmOutput:
    hidden: np.ndarray  # (T, H)
    cell: np.ndarray  # (T, H)
    gates: np.ndarray  # (T, 4H) after activation
    increments: np.ndarray  # (T,)

    def theta_ref(self, theta0=0.0):
        return theta0 + np.cumsum(self.increments)


def lstm_forward(cell, sequence):
    """Run the recurrence from zero initial state over a (T, I) sequence."""
    x = np.asarray(sequence, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] != cell.input_size:
        raise InvalidInputError(f"sequence must be (T>0, {cell.input_size}), got {x.shape}")
    n_t, h = x.shape[0], cell.hidden_size
    hs = np.empty((n_t, h))
    cs = np.empty((n_t, h))
    gates = np.empty((n_t, 4 * h))
    h_prev = np.zeros(h)
    c_prev = np.zeros(h)
    for t in range(n_t):
        z = cell.w @ np.concatenate([x[t], h_prev]) + cell.b
        i = _sigmoid(z[:h])
        f = _sigmoid(z[h : 2 * h])
        o = _sigmoid(z[2 * h : 3 * h])
        g = np.tanh(z[3 * h :])
        c_prev = f * c_prev + i * g
        h_prev = o * np.tanh(c_prev)
        hs[t], cs[t] = h_prev, c_prev
        gates[t] = np.concatenate([i, f, o, g])
    return LstmOutput(hs, cs, gates, hs @ cell.w_out + cell.b_out)


def _as_sequences(data):
    seqs = []
    for xs, ys in data:
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        ys = np.asarray(ys, dtype=float).ravel()
        if xs.shape[0] != ys.shape[0]:
            raise InvalidInputError("sequence and target lengths differ")
        seqs.append((xs, ys))
    return seqs


def lstm_loss_and_grad(cell, data):
    """Mean squared increment error over all steps, and its BPTT gradient."""
    seqs = _as_sequences(data)
    n_total = sum(len(ys) for _, ys in seqs)
    h = cell.hidden_size
    gw = np.zeros_like(cell.w)
    gb = np.zeros_like(cell.b)
    gwo = np.zeros_like(cell.w_out)
    gbo = 0.0
    loss = 0.0
    for xs, ys in seqs:
        out = lstm_forward(cell, xs)
        err = out.increments - ys
        loss += float(err @ err)
        dy = 2.0 * err / n_total
        gwo += dy @ out.hidden
        gbo += float(dy.sum())
        dh_next = np.zeros(h)
        dc_next = np.zeros(h)
        for t in range(len(ys) - 1, -1, -1):
            i, f, o, g = (out.gates[t, k * h : (k + 1) * h] for k in range(4))
            c = out.cell[t]
            c_prev = out.cell[t - 1] if t > 0 else np.zeros(h)
            h_prev = out.hidden[t - 1] if t > 0 else np.zeros(h)
            tc = np.tanh(c)
            dh = dy[t] * cell.w_out + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = np.concatenate(
                [
                    dc * g * i * (1.0 - i),
                    dc * c_prev * f * (1.0 - f),
                    dh * tc * o * (1.0 - o),
                    dc * i * (1.0 - g * g),
                ]
            )
            gw += np.outer(dz, np.concatenate([xs[t], h_prev]))
            gb += dz
            dxh = cell.w.T @ dz
            dh_next = dxh[cell.input_size :]
            dc_next = dc * f
    grad = np.concatenate([gw.ravel(), gb, gwo, [gbo]])
    return loss / n_total, grad


@dataclass(frozen=True)
class LstmTrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-2
    clip_threshold: float = 1e6
    clip_norm: float = 1.0


@dataclass
class LstmRecord:
    rmse: list = field(default_factory=list)  # one entry per epoch, before its update
    clipped_epochs: list = field(default_factory=list)


def lstm_train(cell, data, cfg=LstmTrainConfig()):
    """Plain full-batch gradient descent with BPTT gradients."""
    seqs = _as_sequences(data)
    if not seqs or any(len(ys) < 2 for _, ys in seqs):
        raise InvalidInputError("LSTM training needs sequences of length >= 2")
    rec = LstmRecord()
    theta = cell.flat_params()
    for epoch in range(cfg.epochs):
        loss, grad = lstm_loss_and_grad(cell, seqs)
        rec.rmse.append(math.sqrt(loss))
        gn = float(np.linalg.norm(grad))
        if not math.isfinite(gn):
            raise NumericFailure("non-finite LSTM gradient", epoch=epoch + 1)
        if gn > cfg.clip_threshold:
            grad = grad * (cfg.clip_norm / gn)
            rec.clipped_epochs.append(epoch + 1)
        if cfg.learning_rate != 0.0:
            theta = theta - cfg.learning_rate * grad
            cell = cell.with_params(theta)
    return cell, rec
