"""Event-dynamics encoding and cross-modal alignment math on dense tensors.

The chain: per-slice feature grids [t, h, w, d] -> multi-scale depthwise
temporal convolution -> SE-style temporal gating -> resampling of both
modalities onto a shared lattice -> self-attention-degree importance maps ->
importance-weighted mean-absolute-discrepancy loss, with analytic gradients.

Everything here is a pure function of its inputs; parameters are explicit
dataclasses so runs are reproducible bit-for-bit. Computation stays in the
input arrays' dtype: float64 for tight oracle tests, float32 in the pipeline.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

DEFAULT_DTYPE = np.float32


@dataclass
class FeatureGrid:
    """Dense spatio-temporal feature tensor of shape [t, h, w, d]."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 4:
            raise ValueError(f"expected rank-4 [t, h, w, d], got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise ValueError(f"degenerate dimension in shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("non-finite entries in feature grid")

    @property
    def t(self):
        return self.data.shape[0]

    @property
    def h(self):
        return self.data.shape[1]

    @property
    def w(self):
        return self.data.shape[2]

    @property
    def d(self):
        return self.data.shape[3]


@dataclass
class AlignedPair:
    """RGB and event feature grids resampled onto one [T_c, H_c, W_c, D] lattice."""

    rgb: np.ndarray
    event: np.ndarray

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb)
        self.event = np.asarray(self.event)
        if self.rgb.shape != self.event.shape:
            raise ValueError(f"lattice mismatch: rgb {self.rgb.shape} vs event {self.event.shape}")
        if self.rgb.ndim != 4:
            raise ValueError(f"expected rank-4 lattice, got shape {self.rgb.shape}")
        if not (np.all(np.isfinite(self.rgb)) and np.all(np.isfinite(self.event))):
            raise ValueError("non-finite entries in aligned pair")


@dataclass
class ImportanceMaps:
    """Per-frame spatial weightings [T_c, H_c, W_c]; each frame is non-negative and sums to 1."""

    maps: np.ndarray

    def __post_init__(self):
        self.maps = np.asarray(self.maps)
        if self.maps.ndim != 3:
            raise ValueError(f"expected [T_c, H_c, W_c], got shape {self.maps.shape}")
        if np.any(self.maps < 0):
            raise ValueError("negative importance weight")
        sums = self.maps.sum(axis=(1, 2))
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError(f"per-frame weights must sum to 1, got {sums}")


@dataclass
class LossBreakdown:
    """Total training objective: l_llm + lam * l_cawtd."""

    l_cawtd: float
    lam: float
    l_llm: float
    total: float


# ---------------------------------------------------------------------------
# Stand-in encoder (the real ViT backbones are out of scope)


def toy_patch_encoder(image: np.ndarray, patch: int, d: int, seed: int,
                      dtype=None) -> FeatureGrid:
    """Mean-pool non-overlapping patches, then apply a seeded random channel map.

    Deterministic for a given seed, so pipeline outputs stay reproducible.
    """
    image = np.asarray(image)
    if image.ndim != 3:
        raise ValueError(f"expected [H, W, C] image, got shape {image.shape}")
    h, w, c = image.shape
    if h % patch or w % patch:
        raise ValueError(f"image {h}x{w} not divisible by patch {patch}")
    dtype = dtype or (image.dtype if image.dtype in (np.float32, np.float64) else DEFAULT_DTYPE)
    pooled = image.reshape(h // patch, patch, w // patch, patch, c).mean(axis=(1, 3))
    rng = np.random.default_rng(seed)
    channel_map = rng.standard_normal((c, d)) / np.sqrt(c)
    out = (pooled.astype(np.float64) @ channel_map).astype(dtype)
    return FeatureGrid(out[None])


def encode_slice_stack(counts: np.ndarray, patch: int, d: int, seed: int,
                       dtype=None) -> FeatureGrid:
    """Encode a [N_w, 2, H, W] count stack slice-by-slice with one shared channel map."""
    counts = np.asarray(counts, dtype=np.float64)
    frames = [
        toy_patch_encoder(np.moveaxis(counts[s], 0, -1), patch, d, seed, dtype=dtype).data[0]
        for s in range(counts.shape[0])
    ]
    return FeatureGrid(np.stack(frames, axis=0))


# ---------------------------------------------------------------------------
# Multi-scale depthwise temporal convolution


@dataclass
class TemporalConvParams:
    """One depthwise kernel of shape [k, d] per branch, plus a [n_branches*d, d] projection."""

    kernels: dict[int, np.ndarray]
    projection: np.ndarray


def init_temporal_conv(d: int, kernel_sizes=(1, 3), seed: int = 0) -> TemporalConvParams:
    """Center-tap kernels and identity-plus-small-noise projection (seeded)."""
    sizes = sorted(set(int(k) for k in kernel_sizes))
    rng = np.random.default_rng(seed)
    kernels = {}
    for k in sizes:
        kern = np.zeros((k, d))
        kern[(k - 1) // 2, :] = 1.0
        kernels[k] = kern
    n = len(sizes)
    projection = np.vstack([np.eye(d) / n for _ in range(n)])
    projection = projection + rng.normal(0.0, 0.01, projection.shape)
    return TemporalConvParams(kernels, projection)


def temporal_multiscale_dwconv(f: FeatureGrid, kernel_sizes=(1, 3),
                               params: TemporalConvParams | None = None,
                               seed: int = 0) -> FeatureGrid:
    """Depthwise 1D convolutions over the t axis, concatenated and projected back to d.

    Each branch convolves every channel independently with zero padding, so the
    output grid has the input's shape. Kernel sizes must be odd.
    """
    sizes = sorted(set(int(k) for k in kernel_sizes))
    for k in sizes:
        if k % 2 == 0:
            raise ValueError(f"even kernel size {k} has no symmetric zero padding")
    if params is None:
        params = init_temporal_conv(f.d, sizes, seed)
    branches = []
    for k in sizes:
        kern = np.asarray(params.kernels[k], dtype=f.data.dtype)
        half = (k - 1) // 2
        out = np.zeros_like(f.data)
        for j in range(k):
            shift = j - half
            src_lo, src_hi = max(0, shift), min(f.t, f.t + shift)
            dst_lo, dst_hi = max(0, -shift), min(f.t, f.t - shift)
            out[dst_lo:dst_hi] += kern[j] * f.data[src_lo:src_hi]
        branches.append(out)
    stacked = np.concatenate(branches, axis=-1)
    projected = stacked @ np.asarray(params.projection, dtype=f.data.dtype)
    return FeatureGrid(projected)


# ---------------------------------------------------------------------------
# SE-style temporal gating


@dataclass
class SEGateParams:
    """Two-layer bottleneck over per-slice descriptors: [b, t] -> relu -> [t, b] -> sigmoid."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def init_se_gate(t: int, reduction: int = 2, seed: int = 0) -> SEGateParams:
    b = max(1, t // reduction)
    rng = np.random.default_rng(seed)
    return SEGateParams(
        w1=rng.normal(0.0, 0.1, (b, t)),
        b1=np.zeros(b),
        w2=rng.normal(0.0, 0.1, (t, b)),
        b2=np.zeros(t),
    )


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _se_forward(f: FeatureGrid, params: SEGateParams):
    s = f.data.mean(axis=(1, 2, 3))
    u1 = params.w1 @ s + params.b1
    a = np.maximum(u1, 0.0)
    g = _sigmoid(params.w2 @ a + params.b2)
    return s, u1, g


def se_temporal_weighting(f: FeatureGrid, reduction: int = 2,
                          params: SEGateParams | None = None,
                          seed: int = 0) -> FeatureGrid:
    """Scale each temporal slice by a gate in (0, 1) computed from all slice descriptors jointly.

    Global-average each slice to a scalar, squeeze through the bottleneck, and
    gate slice t of the output by sigmoid(.) of the excitation.
    """
    if params is None:
        params = init_se_gate(f.t, reduction, seed)
    _, _, g = _se_forward(f, params)
    return FeatureGrid(g[:, None, None, None].astype(f.data.dtype) * f.data)


def se_input_gradient(f: FeatureGrid, params: SEGateParams,
                      grad_out: np.ndarray | None = None) -> np.ndarray:
    """Analytic gradient of sum(grad_out * se_output) w.r.t. the input grid.

    The gate depends on every entry of its slice through the global average, so
    the gradient has a direct gated term plus a uniform per-slice correction.
    Undefined exactly at relu kinks (pre-activation 0); tests perturb away.
    """
    if grad_out is None:
        grad_out = np.ones_like(f.data)
    _, u1, g = _se_forward(f, params)
    m = f.h * f.w * f.d
    direct = g[:, None, None, None] * grad_out
    c = (grad_out * f.data).sum(axis=(1, 2, 3))
    jac = (g * (1.0 - g))[:, None] * (params.w2 * (u1 > 0)[None, :]) @ params.w1
    per_slice = jac.T @ c / m
    return direct + per_slice[:, None, None, None]


# ---------------------------------------------------------------------------
# Shared-lattice resampling


def _axis_positions(n_in: int, n_out: int) -> np.ndarray:
    """Corner-aligned source coordinates; a single output sample lands mid-axis."""
    if n_out == 1:
        return np.array([(n_in - 1) / 2.0])
    return np.arange(n_out) * (n_in - 1) / (n_out - 1)


def _interp_axis(data: np.ndarray, axis: int, n_out: int) -> np.ndarray:
    n_in = data.shape[axis]
    if n_in == n_out:
        return data
    pos = _axis_positions(n_in, n_out)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    moved = np.moveaxis(data, axis, 0)
    shape = (n_out,) + (1,) * (moved.ndim - 1)
    out = moved[lo] * (1.0 - frac.reshape(shape)) + moved[hi] * frac.reshape(shape)
    return np.moveaxis(out, 0, axis)


def resample_to_lattice(rgb: FeatureGrid, event: FeatureGrid, t_c: int | None = None,
                        h_c: int | None = None, w_c: int | None = None) -> AlignedPair:
    """Bilinearly resample both grids onto a shared (T_c, H_c, W_c) lattice.

    Spatial axes use corner-aligned bilinear interpolation. The event grid is
    linearly interpolated in time; a single-frame RGB grid is replicated across
    T_c. Defaults: T_c = event temporal length, spatial dims = elementwise
    minimum of the two grids.
    """
    if rgb.d != event.d:
        raise ValueError(f"channel mismatch: rgb d={rgb.d} vs event d={event.d}")
    t_c = event.t if t_c is None else int(t_c)
    h_c = min(rgb.h, event.h) if h_c is None else int(h_c)
    w_c = min(rgb.w, event.w) if w_c is None else int(w_c)

    def spatial(data):
        return _interp_axis(_interp_axis(data, 1, h_c), 2, w_c)

    ev = spatial(_interp_axis(event.data, 0, t_c))
    if rgb.t == 1:
        rg = np.repeat(spatial(rgb.data), t_c, axis=0)
    else:
        rg = spatial(_interp_axis(rgb.data, 0, t_c))
    return AlignedPair(rg, ev)


# ---------------------------------------------------------------------------
# Importance maps, discrepancy, and the alignment loss


def _degree_map(frame: np.ndarray) -> np.ndarray:
    """Row-sums of the token affinity (Gram) matrix after per-token L2 normalization."""
    h, w, d = frame.shape
    tokens = frame.reshape(h * w, d)
    norms = np.linalg.norm(tokens, axis=1)
    zero = norms == 0
    if np.any(zero):
        warnings.warn("zero-norm token kept unnormalized in importance computation",
                      RuntimeWarning, stacklevel=3)
        norms = np.where(zero, 1.0, norms)
    unit = tokens / norms[:, None]
    # degree_i = sum_j <u_i, u_j> = <u_i, sum_j u_j>; O(N d) instead of the full Gram
    degrees = unit @ unit.sum(axis=0)
    return degrees.reshape(h, w)


def _normalize_map(m: np.ndarray) -> np.ndarray:
    shifted = m - m.min()
    total = shifted.sum()
    if total <= 0:
        return np.full_like(m, 1.0 / m.size)
    return shifted / total


def stam_importance(pair: AlignedPair) -> ImportanceMaps:
    """Fuse dual self-attention saliency into one convex weighting per frame.

    Per frame: L2-normalize tokens per modality, take affinity row-sums as token
    saliency, average the two modalities' maps, then min-shift and scale each
    frame to sum to 1 (uniform fallback when the map is constant).
    """
    maps = []
    for t in range(pair.rgb.shape[0]):
        w_r = _degree_map(pair.rgb[t])
        w_e = _degree_map(pair.event[t])
        maps.append(_normalize_map(0.5 * (w_r + w_e)))
    return ImportanceMaps(np.stack(maps, axis=0))


def discrepancy_map(pair: AlignedPair) -> np.ndarray:
    """Channel-wise mean absolute difference per lattice site, shape [T_c, H_c, W_c]."""
    return np.abs(pair.rgb - pair.event).mean(axis=-1)


def ca_wtd_loss(w: ImportanceMaps | np.ndarray, d: np.ndarray) -> float:
    """Average over frames of the spatial inner product <w_t, d_t>."""
    maps = w.maps if isinstance(w, ImportanceMaps) else np.asarray(w)
    d = np.asarray(d)
    if maps.shape != d.shape:
        raise ValueError(f"shape mismatch: weights {maps.shape} vs discrepancy {d.shape}")
    return float((maps * d).sum(axis=(1, 2)).mean())


def total_loss(l_llm: float, l_cawtd: float, lam: float = 0.1) -> LossBreakdown:
    """Combine the externally supplied language loss with the weighted alignment term."""
    for name, v in (("l_llm", l_llm), ("l_cawtd", l_cawtd), ("lam", lam)):
        if not np.isfinite(v):
            raise ValueError(f"non-finite {name}: {v}")
    if l_cawtd < 0:
        raise ValueError(f"alignment loss must be non-negative, got {l_cawtd}")
    return LossBreakdown(l_cawtd=float(l_cawtd), lam=float(lam), l_llm=float(l_llm),
                         total=float(l_llm) + float(lam) * float(l_cawtd))


def loss_gradients(pair: AlignedPair) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradients of the alignment loss w.r.t. both aligned grids.

    Importance maps are treated as constants (stop-gradient), so the gradient is
    the weighted sign of the feature difference. Undefined exactly where the two
    grids tie; tests perturb inputs away from those kinks.
    """
    w = stam_importance(pair).maps
    t_c, d = pair.rgb.shape[0], pair.rgb.shape[3]
    grad_rgb = w[..., None] * np.sign(pair.rgb - pair.event) / (t_c * d)
    return grad_rgb, -grad_rgb


def alignment_summary(pair: AlignedPair, lam: float = 0.1, l_llm: float = 0.0) -> dict:
    """Loss breakdown plus per-frame importance statistics, e.g. for the CLI report."""
    w = stam_importance(pair)
    d = discrepancy_map(pair)
    breakdown = total_loss(l_llm, ca_wtd_loss(w, d), lam)
    return {
        "l_cawtd": breakdown.l_cawtd,
        "lambda": breakdown.lam,
        "l_llm": breakdown.l_llm,
        "total": breakdown.total,
        "frames": [
            {
                "min": float(w.maps[t].min()),
                "max": float(w.maps[t].max()),
                "mean": float(w.maps[t].mean()),
                "weighted_discrepancy": float((w.maps[t] * d[t]).sum()),
            }
            for t in range(w.maps.shape[0])
        ],
    }
