"""Float-precision trainer: shared-decay forward simulation, peak-window loss
and surrogate-gradient backpropagation through time.

The float dynamics use the same per-step decay factor (1 - 2^-d) as the
integer engine so a trained model quantizes without a dynamics mismatch.
Hidden spikes use threshold-subtract reset; spike gradients use a boxcar
surrogate d(spike)/dv = slope * 1[|v - theta| < 1/(2*slope)].  The reset is
detached from the gradient.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .afe import EventRaster
from .errors import ConfigError
from .model import FloatModel, SynNetSpec, build_model, decay_from_dash

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 300
    peak_window_m_ms: float = 140.0
    target_g: float = 1.5
    nontarget_weight_w_l: float = 1.4
    learning_rate: float = 1e-3
    batch_size: int = 16
    surrogate_slope: float = 2.0
    seed: int = 0
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.peak_window_m_ms <= 0 or self.target_g <= 0 \
                or self.nontarget_weight_w_l <= 0:
            raise ConfigError("M, g and w_l must all be positive")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")


@dataclass
class FloatTrace:
    v_readout: np.ndarray              # (timesteps,)
    hidden_spike_counts: np.ndarray    # (layers, timesteps)


# ---------------------------------------------------------------------------
# forward / backward

def _forward_batch(model: FloatModel, X: np.ndarray, retain: bool = False):
    """Simulate a batch.  X is (B, T, C) event counts as floats.

    Returns (v_readout (B, T), spikes per hidden layer list of (B, T, n),
    cache for BPTT or None).
    """
    B, T, _ = X.shape
    cache = {"inputs": [], "u": [], "spikes": []} if retain else None
    hidden_spikes = []
    x = X
    for layer in model.layers[:-1]:
        a_s = decay_from_dash(layer.d_syn)
        a_m = decay_from_dash(layer.d_mem)
        n = layer.size
        i = np.zeros((B, n))
        v = np.zeros((B, n))
        u_all = np.empty((B, T, n)) if retain else None
        s_all = np.empty((B, T, n))
        for t in range(T):
            i = a_s * i + x[:, t] @ layer.weights
            u = a_m * v + i
            s = (u >= layer.threshold).astype(np.float64)
            v = u - layer.threshold * s
            s_all[:, t] = s
            if retain:
                u_all[:, t] = u
        if retain:
            cache["inputs"].append(x)
            cache["u"].append(u_all)
            cache["spikes"].append(s_all)
        hidden_spikes.append(s_all)
        x = s_all

    ro = model.readout
    a_s = decay_from_dash(ro.d_syn)
    a_m = decay_from_dash(ro.d_mem)
    i = np.zeros((B, ro.size))
    v = np.zeros((B, ro.size))
    v_all = np.empty((B, T, ro.size))
    for t in range(T):
        i = a_s * i + x[:, t] @ ro.weights
        v = a_m * v + i
        v_all[:, t] = v
    if retain:
        cache["inputs"].append(x)
    return v_all[:, :, 0], hidden_spikes, cache


def forward_float(model: FloatModel, raster: EventRaster) -> FloatTrace:
    """Single-sample float forward pass mirroring the integer recurrences."""
    if raster.channels != model.spec.input_channels:
        raise ValueError(
            f"raster has {raster.channels} channels, model expects "
            f"{model.spec.input_channels}"
        )
    X = raster.counts.T[np.newaxis].astype(np.float64)
    v_ro, hidden_spikes, _ = _forward_batch(model, X)
    counts = np.stack([s[0].sum(axis=1) for s in hidden_spikes]) \
        if hidden_spikes else np.zeros((0, raster.timesteps))
    return FloatTrace(v_ro[0], counts)


def _backward_batch(model: FloatModel, cache, g_vro: np.ndarray,
                    surrogate_slope: float):
    """BPTT given dL/d(readout membrane) (B, T).  Returns per-layer W grads."""
    B, T = g_vro.shape
    grads = [np.zeros_like(l.weights) for l in model.layers]

    # readout layer (non-spiking)
    ro = model.readout
    a_s = decay_from_dash(ro.d_syn)
    a_m = decay_from_dash(ro.d_mem)
    x = cache["inputs"][-1]
    g_x = np.zeros((B, T, ro.fan_in))
    gv = np.zeros((B, ro.size))
    gi = np.zeros((B, ro.size))
    for t in range(T - 1, -1, -1):
        gv = g_vro[:, t:t + 1] + a_m * gv
        gi = gv + a_s * gi
        grads[-1] += x[:, t].T @ gi
        g_x[:, t] = gi @ ro.weights.T

    # hidden layers, top down
    gs_next = g_x
    half_width = 1.0 / (2.0 * surrogate_slope)
    for li in range(len(model.layers) - 2, -1, -1):
        layer = model.layers[li]
        a_s = decay_from_dash(layer.d_syn)
        a_m = decay_from_dash(layer.d_mem)
        x = cache["inputs"][li]
        u = cache["u"][li]
        g_x = np.zeros((B, T, layer.fan_in))
        gu = np.zeros((B, layer.size))
        gi = np.zeros((B, layer.size))
        for t in range(T - 1, -1, -1):
            sg = surrogate_slope * (
                np.abs(u[:, t] - layer.threshold) < half_width)
            gu = a_m * gu + gs_next[:, t] * sg
            gi = gu + a_s * gi
            grads[li] += x[:, t].T @ gi
            g_x[:, t] = gi @ layer.weights.T
        gs_next = g_x
    return grads


# ---------------------------------------------------------------------------
# loss

def peak_loss(x: np.ndarray, y: int, cfg: TrainConfig, dt_ms: float) -> float:
    """Windowed-peak training loss for one readout channel.

    y = 1: squared error between the mean of x over the window starting at the
    (first) argmax and the target level g.  y = 0: w_l * mean(x^2).
    """
    loss, _ = _peak_loss_with_grad(np.asarray(x, dtype=np.float64), y, cfg, dt_ms)
    return loss


def _peak_loss_with_grad(x: np.ndarray, y: int, cfg: TrainConfig,
                         dt_ms: float) -> tuple[float, np.ndarray]:
    if x.size == 0:
        raise ValueError("peak_loss requires a non-empty membrane trace")
    T = len(x)
    g_x = np.zeros(T)
    if y == 1:
        m_steps = max(1, int(round(cfg.peak_window_m_ms / dt_ms)))
        m = int(np.argmax(x))                    # first maximum; detached
        hi = min(m + m_steps, T)
        w = x[m:hi].mean()
        loss = (w - cfg.target_g) ** 2
        g_x[m:hi] = 2.0 * (w - cfg.target_g) / (hi - m)
    else:
        loss = cfg.nontarget_weight_w_l * float(np.mean(x ** 2))
        g_x = cfg.nontarget_weight_w_l * 2.0 * x / T
    return float(loss), g_x


# ---------------------------------------------------------------------------
# optimizer

class _Adam:
    """Adaptive-moment gradient descent, beta = (0.9, 0.999)."""

    def __init__(self, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            m_hat = m / (1 - self.b1 ** self.t)
            v_hat = v / (1 - self.b2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# training loop

@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float


def _stack_batch(samples: list[EventRaster]) -> np.ndarray:
    return np.stack([r.counts.T for r in samples]).astype(np.float64)


def _batch_loss_and_grads(model: FloatModel, X, labels, cfg, dt_ms,
                          with_grads=True):
    v_ro, _, cache = _forward_batch(model, X, retain=with_grads)
    B, T = v_ro.shape
    g_vro = np.zeros((B, T))
    total = 0.0
    for b, y in enumerate(labels):
        loss, g = _peak_loss_with_grad(v_ro[b], int(y), cfg, dt_ms)
        total += loss
        g_vro[b] = g / B
    mean_loss = total / B
    if not with_grads:
        return mean_loss, None
    grads = _backward_batch(model, cache, g_vro, cfg.surrogate_slope)
    return mean_loss, grads


def _accuracy(model: FloatModel, X, labels) -> float:
    v_ro, _, _ = _forward_batch(model, X)
    theta = float(model.readout.threshold[0])
    pred = v_ro.max(axis=1) >= theta
    return float(np.mean(pred == np.asarray(labels, dtype=bool)))


def train(spec: SynNetSpec, dataset: list[tuple[EventRaster, int]],
          cfg: TrainConfig,
          model: FloatModel | None = None) -> tuple[FloatModel, list[EpochStats]]:
    """Train a SynNet on (raster, label) pairs; returns the model with the
    lowest validation loss plus the per-epoch loss curve."""
    if not dataset:
        raise ConfigError("dataset is empty")
    labels_all = np.array([y for _, y in dataset])
    if len(set(labels_all.tolist())) < 2:
        raise ConfigError("dataset must contain both classes")

    rng = np.random.default_rng(cfg.seed)
    if model is None:
        model = build_model(spec, cfg.seed)
    else:
        model = model.copy()

    order = rng.permutation(len(dataset))
    n_val = max(1, int(round(cfg.val_fraction * len(dataset))))
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(train_idx) == 0:
        train_idx = val_idx
    X_train = _stack_batch([dataset[i][0] for i in train_idx])
    y_train = labels_all[train_idx]
    X_val = _stack_batch([dataset[i][0] for i in val_idx])
    y_val = labels_all[val_idx]

    params = [l.weights for l in model.layers]
    opt = _Adam([p.shape for p in params], cfg.learning_rate)
    dt_ms = spec.dt_ms

    best_val = np.inf
    best_weights = [p.copy() for p in params]
    history: list[EpochStats] = []
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(len(train_idx))
        losses = []
        for start in range(0, len(perm), cfg.batch_size):
            sel = perm[start:start + cfg.batch_size]
            loss, grads = _batch_loss_and_grads(
                model, X_train[sel], y_train[sel], cfg, dt_ms)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"training diverged: loss {loss} at epoch {epoch}")
            opt.step(params, grads)
            losses.append(loss)
        train_loss = float(np.mean(losses))
        val_loss, _ = _batch_loss_and_grads(model, X_val, y_val, cfg, dt_ms,
                                            with_grads=False)
        val_acc = _accuracy(model, X_val, y_val)
        history.append(EpochStats(epoch, train_loss, val_loss, val_acc))
        if val_loss < best_val:
            best_val = val_loss
            best_weights = [p.copy() for p in params]
        log.debug("epoch %d train %.5f val %.5f acc %.3f",
                  epoch, train_loss, val_loss, val_acc)

    for p, w in zip(params, best_weights):
        p[...] = w
    return model, history


def write_loss_curve(path, history: list[EpochStats]):
    with open(path, "w", encoding="utf-8") as f:
        f.write("epoch,train_loss,val_loss,val_acc\n")
        for h in history:
            f.write(f"{h.epoch},{h.train_loss:.8g},{h.val_loss:.8g},"
                    f"{h.val_acc:.6g}\n")


# ---------------------------------------------------------------------------
# gradient verification

@dataclass
class GradCheckResult:
    max_rel_error: float
    conclusive: bool


def grad_check(model: FloatModel, raster: EventRaster, label: int,
               cfg: TrainConfig, h: float = 1e-4,
               max_params: int = 64) -> GradCheckResult:
    """Check analytic readout-weight gradients against central differences.

    The readout path is spike-free, so the finite-difference loss surface is
    smooth as long as the probe's argmax window does not shift.
    """
    dt_ms = model.spec.dt_ms
    X = raster.counts.T[np.newaxis].astype(np.float64)
    _, grads = _batch_loss_and_grads(model, X, [label], cfg, dt_ms)
    analytic = grads[-1]

    W = model.readout.weights
    flat = list(np.ndindex(W.shape))[:max_params]
    max_err = 0.0
    any_nonzero = False
    for idx in flat:
        orig = W[idx]
        W[idx] = orig + h
        lp, _ = _batch_loss_and_grads(model, X, [label], cfg, dt_ms,
                                      with_grads=False)
        W[idx] = orig - h
        lm, _ = _batch_loss_and_grads(model, X, [label], cfg, dt_ms,
                                      with_grads=False)
        W[idx] = orig
        numeric = (lp - lm) / (2 * h)
        a = analytic[idx]
        if abs(a) > 1e-12 or abs(numeric) > 1e-12:
            any_nonzero = True
            max_err = max(max_err,
                          abs(a - numeric) / max(abs(a), abs(numeric)))
    return GradCheckResult(max_err, conclusive=any_nonzero)
