"""Independent brute-force oracles used to verify the package's fast paths.

Everything here is written as plainly as possible (explicit loops, direct
definitions) and never calls the implementation it is checking.
"""

from __future__ import annotations

import math

import numpy as np

from gliomol.autodiff import Tensor, reverse_grad


# ---------------------------------------------------------------------------
# gradients: central finite differences
# ---------------------------------------------------------------------------

def finite_difference_check(make_loss, params, h: float = 1e-5, rtol: float = 1e-5,
                            atol: float = 1e-7, max_coords: int = 40, seed: int = 0):
    """Compare reverse-mode gradients against central differences.

    For each parameter tensor, up to ``max_coords`` coordinates are sampled
    and the vector of analytic vs numeric partials is compared as
    ||a - n|| <= max(rtol * max(||a||, ||n||), atol). The absolute floor
    covers parameters whose true gradient is exactly zero. Returns the worst
    relative error observed (0 when both sides vanish).
    """
    rng = np.random.default_rng(seed)
    loss = make_loss()
    grads = reverse_grad(loss, params)
    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        k = min(max_coords, flat.size)
        idx = rng.choice(flat.size, size=k, replace=False)
        analytic = gflat[idx].copy()
        numeric = np.empty(k)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            up = float(make_loss().data)
            flat[i] = orig - h
            down = float(make_loss().data)
            flat[i] = orig
            numeric[j] = (up - down) / (2.0 * h)
        diff = np.linalg.norm(analytic - numeric)
        scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
        if diff > max(rtol * scale, atol):
            raise AssertionError(
                f"gradient mismatch: ||a-n||={diff:.3e} scale={scale:.3e} "
                f"(analytic {analytic[:4]}, numeric {numeric[:4]})"
            )
        worst = max(worst, diff / max(scale, atol / rtol))
    return worst


# ---------------------------------------------------------------------------
# contrastive losses
# ---------------------------------------------------------------------------

def cosine(u, v) -> float:
    return float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))


def supcon_loss_brute(projected: np.ndarray, states_col: np.ndarray, tau: float) -> float:
    """Triple-loop supervised contrastive loss for one label."""
    b = projected.shape[0]
    total = 0.0
    for i in range(b):
        if states_col[i] == -1:
            continue
        positives = [p for p in range(b)
                     if p != i and states_col[p] != -1 and states_col[p] == states_col[i]]
        if not positives:
            continue
        anchor_terms = 0.0
        for p in positives:
            denom = 0.0
            for n in range(b):
                if n == i:
                    continue
                denom += math.exp(cosine(projected[i], projected[n]) / tau)
            anchor_terms += math.log(math.exp(cosine(projected[i], projected[p]) / tau) / denom)
        total += -anchor_terms / len(positives)
    return total


def multilabel_supcon_brute(projections: list, states: np.ndarray, lambdas, tau: float) -> float:
    total = 0.0
    for label in range(states.shape[1]):
        total += lambdas[label] * supcon_loss_brute(projections[label], states[:, label], tau)
    return total


# ---------------------------------------------------------------------------
# genomics
# ---------------------------------------------------------------------------

def cooccurrence_brute(profiles, panel) -> np.ndarray:
    """Patient-by-patient pair counting over the token vocabulary."""
    n = panel.n_tokens
    x = np.zeros((n, n), dtype=np.int64)
    for prof in profiles:
        toks = sorted(panel.token(g, s) for g, s in prof.calls.items())
        for a in toks:
            for b in toks:
                if a != b:
                    x[a, b] += 1
    return x


def glove_loss_brute(e: np.ndarray, x: np.ndarray, x_max: float, alpha: float) -> float:
    total = 0.0
    n = x.shape[0]
    for i in range(n):
        for j in range(n):
            if i == j or x[i, j] == 0:
                continue
            w = min((x[i, j] / x_max) ** alpha, 1.0)
            resid = float(np.dot(e[i], e[j])) - math.log(x[i, j])
            total += w * resid * resid
    return total


# ---------------------------------------------------------------------------
# registration / imaging
# ---------------------------------------------------------------------------

def correlation_argmax_brute(fixed: np.ndarray, moving: np.ndarray) -> tuple:
    """Exhaustive circular cross-correlation peak, signed wrap convention.

    Returns (dy, dx) maximizing sum(fixed * roll(moving, -(dy, dx))), i.e.
    the shift that maps ``fixed`` onto ``moving``.
    """
    h, w = fixed.shape
    best, best_shift = -np.inf, (0, 0)
    f = fixed - fixed.mean()
    m = moving - moving.mean()
    for dy in range(h):
        for dx in range(w):
            score = float((f * np.roll(m, (-dy, -dx), axis=(0, 1))).sum())
            if score > best:
                best = score
                best_shift = (dy, dx)
    dy, dx = best_shift
    if dy > h // 2:
        dy -= h
    if dx > w // 2:
        dx -= w
    return dy, dx


def pool_overlaps_brute(preds: np.ndarray, origins: np.ndarray, dims: tuple, patch: int) -> tuple:
    """Per-pixel loop accumulation of overlapping patch predictions."""
    h, w = dims
    l = preds.shape[1]
    sums = np.zeros((h, w, l))
    counts = np.zeros((h, w), dtype=np.int64)
    for (y, x), vec in zip(origins, preds):
        for yy in range(y, y + patch):
            for xx in range(x, x + patch):
                sums[yy, xx] += vec
                counts[yy, xx] += 1
    means = np.zeros_like(sums)
    nz = counts > 0
    means[nz] = sums[nz] / counts[nz, None]
    return means, counts


# ---------------------------------------------------------------------------
# aggregation and tied outputs
# ---------------------------------------------------------------------------

def masked_mean_brute(probs: np.ndarray, tumor_flags: np.ndarray) -> np.ndarray:
    picked = [probs[i] for i in range(len(tumor_flags)) if tumor_flags[i]]
    out = np.zeros(probs.shape[1])
    for row in picked:
        out += row
    return out / len(picked)


def diag_dot_brute(h: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Per-label inner products, one explicit dot at a time."""
    out = np.zeros(h.shape[0])
    for k in range(h.shape[0]):
        s = 0.0
        for j in range(h.shape[1]):
            s += h[k, j] * w[k, j]
        out[k] = s
    return out


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def auroc_pairwise_brute(scores, labels) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    pos = scores[labels]
    neg = scores[~labels]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def average_precision_brute(scores, labels) -> float:
    """AP from first principles: step through distinct thresholds."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    thresholds = sorted(set(scores), reverse=True)
    ap = 0.0
    prev_recall = 0.0
    for t in thresholds:
        called = scores >= t
        tp = int((called & labels).sum())
        recall = tp / n_pos
        precision = tp / int(called.sum())
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def confusion_brute(scores, labels, threshold: float = 0.5) -> dict:
    tp = fp = fn = tn = 0
    for s, y in zip(scores, labels):
        call = s >= threshold
        if call and y:
            tp += 1
        elif call and not y:
            fp += 1
        elif not call and y:
            fn += 1
        else:
            tn += 1
    return {"tp": tp, "fp": fp, "fn": fn, "tn": tn}


def multilabel_report_brute(scores: np.ndarray, labels: np.ndarray) -> dict:
    """Summary metrics computed definition by definition."""
    n, l = scores.shape
    pred = scores >= 0.5
    labels = labels.astype(bool)

    acc = [float((pred[:, k] == labels[:, k]).sum()) / n for k in range(l)]
    auc = [auroc_pairwise_brute(scores[:, k], labels[:, k]) for k in range(l)]
    ap = [average_precision_brute(scores[:, k], labels[:, k]) for k in range(l)]

    sub = sum(1 for i in range(n) if all(pred[i, k] == labels[i, k] for k in range(l)))

    eb_terms = []
    for i in range(n):
        tp = sum(1 for k in range(l) if pred[i, k] and labels[i, k])
        denom = sum(1 for k in range(l) if pred[i, k]) + sum(1 for k in range(l) if labels[i, k])
        eb_terms.append(2 * tp / denom if denom else 1.0)

    tp = int((pred & labels).sum())
    fp = int((pred & ~labels).sum())
    fn = int((~pred & labels).sum())
    mic = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 1.0

    return {
        "mAcc": float(np.mean(acc)),
        "mAUC": float(np.mean(auc)),
        "mAP": float(np.mean(ap)),
        "SubAcc": sub / n,
        "ebF1": float(np.mean(eb_terms)),
        "micF1": mic,
    }


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

def adam_trace_brute(x0: np.ndarray, grads: list, lr: float, beta1: float = 0.9,
                     beta2: float = 0.999, eps: float = 1e-8) -> np.ndarray:
    """Hand-simulated Adam over a fixed gradient sequence."""
    x = x0.astype(np.float64).copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        x = x - lr * mhat / (np.sqrt(vhat) + eps)
    return x


# ---------------------------------------------------------------------------
# synthetic texture statistics (independent of the generator internals)
# ---------------------------------------------------------------------------

def band_energy(img2d: np.ndarray, lo: float, hi: float) -> float:
    """Mean spectral power inside a radial frequency annulus (cycles/px)."""
    f = np.fft.fft2(img2d - img2d.mean())
    fy = np.fft.fftfreq(img2d.shape[0])[:, None]
    fx = np.fft.fftfreq(img2d.shape[1])[None, :]
    rho = np.sqrt(fy * fy + fx * fx)
    sel = (rho >= lo) & (rho <= hi)
    return float((np.abs(f)[sel] ** 2).mean())


def bright_outlier_mass(img2d: np.ndarray) -> float:
    """Mean of the top percentile minus the median: sensitive to dots."""
    med, top = np.quantile(img2d, [0.5, 0.99])
    return float(img2d[img2d >= top].mean() - med)
