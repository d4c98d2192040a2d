"""Conditional VAE that lifts 2D poses to a set of 3D candidates, plus the
deterministic regression baseline it is compared against.

Both networks work in normalized coordinates: 2D inputs are the 15 non-root
mapped joints relative to the root (30 values) and 3D targets are the 16 non-root joints of the
hip-centred pose (48 values). Candidates handed back to callers are in
millimetres with the root joint at the origin.
"""

from dataclasses import asdict, dataclass, replace
import logging

import numpy as np

from .errors import EmptyDataset, NonPositiveVariance, ShapeMismatch
from .nn import Adam, RngStream, load_checkpoint, mse_loss, residual_mlp, save_checkpoint
from .pose import (
    POSE2D,
    POSE3D_ROOTCENTERED,
    NormStats,
    center_at_hip,
    denormalize,
    fit_norm_stats,
    flatten_nonroot,
    normalize,
    unflatten_nonroot,
)
from .skeleton import H36M_SKELETON

log = logging.getLogger(__name__)

LOG_VAR_CLAMP = 10.0


@dataclass(frozen=True)
class CvaeConfig:
    lambda1: float = 10.0
    lambda2: float = 100.0
    alpha: float = 0.5
    k_train: int = 10
    k_test: int = 200
    latent_dim: int = 48
    hidden_dim: int = 1024
    blocks_per_net: int = 2
    epochs: int = 200
    batch_size: int = 256
    base_lr: float = 2.5e-4
    dropout: float = 0.5
    lr_decay: float = 0.96
    lr_decay_every: int = 4

    def __post_init__(self):
        if not (self.lambda1 >= 0 and self.lambda2 > 0):
            raise ValueError("lambda1 must be >= 0 and lambda2 > 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.k_train < 1 or self.k_test < 1:
            raise ValueError("k_train and k_test must be >= 1")

    @classmethod
    def desk(cls, **overrides):
        """Small preset that trains in minutes on one CPU core."""
        base = dict(latent_dim=16, hidden_dim=256, blocks_per_net=1, epochs=50, dropout=0.1,
                    base_lr=1e-3)
        base.update(overrides)
        return cls(**base)

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass
class SampleSet:
    """K candidate poses ``(K, N, 3)`` with optional scores and weights."""

    candidates: np.ndarray
    scores: np.ndarray = None
    weights: np.ndarray = None

    def __post_init__(self):
        self.candidates = np.asarray(self.candidates, dtype=np.float64)
        if self.candidates.ndim != 3 or self.candidates.shape[0] < 1:
            raise ShapeMismatch("candidates must have shape (K>=1, N, 3)")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (len(self),) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("weights must be K non-negative values summing to 1")
            self.weights = w

    def __len__(self):
        return self.candidates.shape[0]

    def prefix(self, k):
        return SampleSet(self.candidates[:k])


# --- data preparation -----------------------------------------------------


def pose2d_vectors(pose2d, skeleton=H36M_SKELETON):
    """Root-relative 2D joints without the root, flattened.

    The root sits on the optical axis for virtually projected data, so its
    absolute pixel position carries no variance to normalize.
    """
    pose2d = np.asarray(pose2d, dtype=np.float64)
    root2d = skeleton.joint_map_2d3d.index(skeleton.root_index)
    rel = pose2d - pose2d[..., root2d : root2d + 1, :]
    keep = [k for k in range(pose2d.shape[-2]) if k != root2d]
    return rel[..., keep, :].reshape(*pose2d.shape[:-2], -1)


def pose3d_vectors(pose3d, skeleton=H36M_SKELETON):
    return flatten_nonroot(center_at_hip(pose3d, skeleton), skeleton)


def fit_stats(pose2d, pose3d, skeleton=H36M_SKELETON):
    return (
        fit_norm_stats(pose2d_vectors(pose2d, skeleton), POSE2D),
        fit_norm_stats(pose3d_vectors(pose3d, skeleton), POSE3D_ROOTCENTERED),
    )


def _minibatches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        if len(idx) >= 2:  # batch norm needs two rows
            yield idx


class _Lifter:
    dtype = np.float32

    def _inputs(self, pose2d):
        x = normalize(pose2d_vectors(pose2d, self.skeleton), self.stats2d)
        return x.astype(self.dtype)

    def _targets(self, pose3d):
        x = normalize(pose3d_vectors(pose3d, self.skeleton), self.stats3d)
        return x.astype(self.dtype)

    def _to_poses(self, y):
        return unflatten_nonroot(denormalize(np.asarray(y, dtype=np.float64), self.stats3d),
                                 self.skeleton)

    def train(self, mode=True):
        for net in self.networks().values():
            net.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def parameters(self):
        return [p for net in self.networks().values() for p in net.parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def astype(self, dtype):
        self.dtype = dtype
        for net in self.networks().values():
            net.astype(dtype)
        return self


# --- CVAE -----------------------------------------------------------------


class CvaeModel(_Lifter):
    """Encoder ``(P3D, P2D) -> (mu, log_var)`` and decoder ``(z, P2D) -> P3D``."""

    kind = "cvae"

    def __init__(self, config, stats2d, stats3d, rng=None, skeleton=H36M_SKELETON,
                 encoder=None, decoder=None):
        self.config = config
        self.stats2d = stats2d
        self.stats3d = stats3d
        self.skeleton = skeleton
        rng = rng if rng is not None else RngStream(0)
        d2, d3, lat = stats2d.dim, stats3d.dim, config.latent_dim
        c = config
        self.encoder = encoder or residual_mlp(d3 + d2, 2 * lat, c.hidden_dim, c.blocks_per_net,
                                               c.dropout, rng.child("encoder"))
        self.decoder = decoder or residual_mlp(lat + d2, d3, c.hidden_dim, c.blocks_per_net,
                                               c.dropout, rng.child("decoder"))

    def networks(self):
        return {"encoder": self.encoder, "decoder": self.decoder}

    def encode(self, x2, x3):
        h = self.encoder.forward(np.concatenate([x3, x2], axis=1))
        lat = self.config.latent_dim
        return h[:, :lat], h[:, lat:]

    def decode(self, z, x2):
        return self.decoder.forward(np.concatenate([z, x2], axis=1))


def kl_divergence(mu, log_var):
    """KL(N(mu, exp(log_var)) || N(0, I)), summed over the last axis."""
    mu = np.asarray(mu, dtype=np.float64)
    log_var = np.asarray(log_var, dtype=np.float64)
    return 0.5 * np.sum(mu**2 + np.exp(log_var) - log_var - 1.0, axis=-1)


def clamp_log_var(log_var):
    return np.clip(log_var, -LOG_VAR_CLAMP, LOG_VAR_CLAMP)


def reparameterize(mu, log_var, rng):
    mu = np.asarray(mu)
    eps = rng.normal(mu.shape)
    return mu + np.exp(0.5 * clamp_log_var(np.asarray(log_var))) * eps


def _check_batch(model, x2, x3):
    if x2.ndim != 2 or x2.shape[1] != model.stats2d.dim:
        raise ShapeMismatch(f"2D batch must be (B, {model.stats2d.dim}), got {x2.shape}")
    if x3.shape != (x2.shape[0], model.stats3d.dim):
        raise ShapeMismatch(f"3D batch must be ({x2.shape[0]}, {model.stats3d.dim}), got {x3.shape}")


def cvae_loss(model, x2, x3, rng, backward=True, scale=1.0):
    """``lambda1 * KL + lambda2 * E_q ||x3 - Dec(z, x2)||^2`` on a normalized batch.

    The expectation uses ``k_train`` reparameterized draws from
    ``rng.child("posterior")``. Returns ``(loss, parts)``; when ``backward``
    is set the gradients of ``scale * loss`` are accumulated into the model.
    """
    _check_batch(model, x2, x3)
    cfg = model.config
    k, (b, lat) = cfg.k_train, (x2.shape[0], cfg.latent_dim)
    mu, raw_lv = model.encode(x2, x3)
    lv = clamp_log_var(raw_lv)
    std = np.exp(0.5 * lv)
    eps = rng.child("posterior").normal((k, b, lat)).astype(mu.dtype)
    z = (mu + std * eps).reshape(k * b, lat)
    y = model.decode(z, np.tile(x2, (k, 1)))
    diff = y - np.tile(x3, (k, 1))
    rec = float((diff.astype(np.float64) ** 2).sum() / (k * b))
    kl = float(kl_divergence(mu, lv).mean())
    loss = cfg.lambda1 * kl + cfg.lambda2 * rec
    if backward:
        dy = (scale * cfg.lambda2 * 2.0 / (k * b)) * diff
        dz = model.decoder.backward(dy)[:, :lat].reshape(k, b, lat)
        dmu = dz.sum(axis=0) + (scale * cfg.lambda1 / b) * mu
        dlv = (dz * eps).sum(axis=0) * 0.5 * std + (scale * cfg.lambda1 * 0.5 / b) * (np.exp(lv) - 1.0)
        dlv = dlv * (np.abs(raw_lv) <= LOG_VAR_CLAMP)
        model.encoder.backward(np.concatenate([dmu, dlv], axis=1))
    return loss, {"kl": kl, "rec_posterior": rec}


def gsnn_loss(model, x2, x3, rng, backward=True, scale=1.0):
    """``E_{z ~ N(0, I)} ||x3 - Dec(z, x2)||^2`` over ``k_train`` prior draws
    from ``rng.child("prior")``. Only the decoder receives gradients."""
    _check_batch(model, x2, x3)
    cfg = model.config
    k, (b, lat) = cfg.k_train, (x2.shape[0], cfg.latent_dim)
    z = rng.child("prior").normal((k * b, lat)).astype(x2.dtype)
    y = model.decode(z, np.tile(x2, (k, 1)))
    diff = y - np.tile(x3, (k, 1))
    rec = float((diff.astype(np.float64) ** 2).sum() / (k * b))
    if backward:
        model.decoder.backward((scale * 2.0 / (k * b)) * diff)
    return rec, {"rec_prior": rec}


def hybrid_loss(model, x2, x3, rng, backward=True):
    """``alpha * cvae_loss + (1 - alpha) * gsnn_loss``; a zero-weighted term is skipped."""
    a = model.config.alpha
    parts = {"kl": 0.0, "rec_posterior": 0.0, "rec_prior": 0.0}
    total = 0.0
    if a > 0:
        lc, pc = cvae_loss(model, x2, x3, rng, backward, scale=a)
        total += a * lc
        parts.update(pc, cvae=lc)
    if a < 1:
        lg, pg = gsnn_loss(model, x2, x3, rng, backward, scale=1.0 - a)
        total += (1.0 - a) * lg
        parts.update(pg, gsnn=lg)
    return total, parts


def _training_arrays(model, pose2d, pose3d):
    if len(pose2d) == 0 or len(pose3d) == 0:
        raise EmptyDataset("training set is empty")
    if len(pose2d) != len(pose3d):
        raise ShapeMismatch(f"{len(pose2d)} 2D poses vs {len(pose3d)} 3D poses")
    return model._inputs(pose2d), model._targets(pose3d)


def _fit(model, x2, x3, rng, step_fn, epochs, batch_size, on_epoch=None):
    cfg = model.config
    opt = Adam(model.parameters(), lr=cfg.base_lr, decay_rate=cfg.lr_decay,
               decay_every=cfg.lr_decay_every)
    history = []
    model.train()
    shuffle = rng.child("shuffle")
    for epoch in range(epochs):
        losses, n_batches = [], 0
        for idx in _minibatches(x2.shape[0], batch_size, shuffle):
            opt.zero_grad()
            loss, parts = step_fn(x2[idx], x3[idx], rng.child(f"step{opt.step_count}"))
            opt.step()
            losses.append((loss, parts))
            n_batches += 1
        if not losses:
            raise EmptyDataset("no mini-batch with at least two rows")
        row = {"epoch": epoch + 1, "lr": opt.current_lr,
               "loss": float(np.mean([l for l, _ in losses]))}
        for key in losses[0][1]:
            row[key] = float(np.mean([p[key] for _, p in losses]))
        history.append(row)
        opt.end_epoch()
        if not np.isfinite(row["loss"]):
            raise FloatingPointError(f"loss diverged at epoch {epoch + 1}")
        if on_epoch:
            on_epoch(row)
        log.debug("epoch %d loss %.5f", epoch + 1, row["loss"])
    model.eval()
    return model, history


def train(model, pose2d, pose3d, rng, epochs=None, batch_size=None, on_epoch=None):
    """Mini-batch Adam on the hybrid objective. Returns ``(model, history)``
    with the model switched to eval mode."""
    cfg = model.config
    x2, x3 = _training_arrays(model, pose2d, pose3d)
    step = lambda a, b, r: hybrid_loss(model, a, b, r)  # noqa: E731
    return _fit(model, x2, x3, rng, step, epochs or cfg.epochs, batch_size or cfg.batch_size,
                on_epoch)


def sample_candidates(model, pose2d, k, rng):
    """Decode ``k`` prior draws for one 2D pose into a :class:`SampleSet`.

    Draws come from ``rng`` in order, so the first ``k`` candidates of a
    larger request match a ``k``-sample request with the same seed.
    """
    return SampleSet(sample_candidates_batch(model, np.asarray(pose2d)[None], k, [rng])[0])


def sample_candidates_batch(model, pose2d, k, rng, chunk_rows=20000):
    """Candidates for many items: returns ``(M, k, N, 3)`` in mm.

    ``rng`` is either a parent stream (item ``m`` draws from
    ``rng.child(str(m))``) or a list of per-item streams.
    """
    model.eval()
    pose2d = np.asarray(pose2d, dtype=np.float64)
    m = pose2d.shape[0]
    streams = rng if isinstance(rng, (list, tuple)) else [rng.child(str(i)) for i in range(m)]
    lat = model.config.latent_dim
    x2 = model._inputs(pose2d)
    out = np.empty((m, k, model.skeleton.num_joints, 3))
    per_chunk = max(1, chunk_rows // k)
    for s in range(0, m, per_chunk):
        e = min(m, s + per_chunk)
        z = np.concatenate([streams[i].normal((k, lat)) for i in range(s, e)]).astype(model.dtype)
        y = model.decode(z, np.repeat(x2[s:e], k, axis=0))
        out[s:e] = model._to_poses(y).reshape(e - s, k, -1, 3)
    return out


# --- deterministic baseline -----------------------------------------------


class BaselineModel(_Lifter):
    """Residual MLP regressing one 3D pose from a 2D pose."""

    kind = "baseline"

    def __init__(self, config, stats2d, stats3d, rng=None, skeleton=H36M_SKELETON, net=None):
        self.config = config
        self.stats2d = stats2d
        self.stats3d = stats3d
        self.skeleton = skeleton
        rng = rng if rng is not None else RngStream(0)
        self.net = net or residual_mlp(stats2d.dim, stats3d.dim, config.hidden_dim,
                                       config.blocks_per_net, config.dropout, rng.child("baseline"))

    def networks(self):
        return {"regressor": self.net}


def baseline_loss(model, x2, x3, backward=True):
    y = model.net.forward(x2)
    loss, dy = mse_loss(y, x3)
    if backward:
        model.net.backward(dy)
    return loss, {"mse": loss}


def train_baseline(model, pose2d, pose3d, rng, epochs=None, batch_size=None, on_epoch=None):
    cfg = model.config
    x2, x3 = _training_arrays(model, pose2d, pose3d)
    step = lambda a, b, r: baseline_loss(model, a, b)  # noqa: E731
    return _fit(model, x2, x3, rng, step, epochs or cfg.epochs, batch_size or cfg.batch_size,
                on_epoch)


def baseline_regress(model, pose2d):
    """Deterministic 3D prediction(s) in mm for ``(..., 16, 2)`` input."""
    model.eval()
    pose2d = np.asarray(pose2d, dtype=np.float64)
    single = pose2d.ndim == 2
    batch = pose2d[None] if single else pose2d
    y = model.net.forward(model._inputs(batch))
    poses = model._to_poses(y)
    return poses[0] if single else poses


def baseline_gaussian_sample(base, variance, k, rng, skeleton=H36M_SKELETON):
    """Perturb every non-root coordinate of ``base`` with N(0, variance) noise (mm^2)."""
    if not variance > 0:
        raise NonPositiveVariance(f"variance must be positive, got {variance}")
    base = center_at_hip(base, skeleton)
    noise = rng.normal((k, *base.shape)) * np.sqrt(variance)
    noise[:, skeleton.root_index, :] = 0.0
    return SampleSet(base[None] + noise)


# --- persistence ----------------------------------------------------------


def save_model(path, model):
    extra = {
        "model": model.kind,
        "config": asdict(model.config),
        "stats2d": model.stats2d.to_dict(),
        "stats3d": model.stats3d.to_dict(),
    }
    save_checkpoint(path, model.networks(), extra)


def load_model(path):
    nets, extra = load_checkpoint(path)
    cfg = CvaeConfig(**extra["config"])
    s2 = NormStats.from_dict(extra["stats2d"])
    s3 = NormStats.from_dict(extra["stats3d"])
    if extra.get("model") == "cvae":
        model = CvaeModel(cfg, s2, s3, encoder=nets["encoder"], decoder=nets["decoder"])
    elif extra.get("model") == "baseline":
        model = BaselineModel(cfg, s2, s3, net=nets["regressor"])
    else:
        raise ValueError(f"unknown model kind in checkpoint: {extra.get('model')!r}")
    return model.eval()


def build_model(kind, config, pose2d, pose3d, rng):
    """Fit normalization stats on the training poses and construct a model."""
    s2, s3 = fit_stats(pose2d, pose3d)
    if kind == "cvae":
        return CvaeModel(config, s2, s3, rng)
    if kind == "baseline":
        return BaselineModel(config, s2, s3, rng)
    raise ValueError(f"unknown model kind {kind!r}")


__all__ = [
    "BaselineModel", "CvaeConfig", "CvaeModel", "SampleSet", "baseline_gaussian_sample",
    "baseline_loss", "baseline_regress", "build_model", "clamp_log_var", "cvae_loss",
    "fit_stats", "gsnn_loss", "hybrid_loss", "kl_divergence", "load_model", "reparameterize",
    "sample_candidates", "sample_candidates_batch", "save_model", "train", "train_baseline",
]
