"""Numba kernels for histogram construction, split search and tree traversal.

All loops run in a fixed order so results are bit-identical between runs.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def build_histogram(bins, rows, grad, hess, n_bins):
    n_features = bins.shape[1]
    hist = np.zeros((n_features, n_bins, 3))
    for i in range(rows.shape[0]):
        r = rows[i]
        g = grad[r]
        h = hess[r]
        for f in range(n_features):
            b = bins[r, f]
            hist[f, b, 0] += g
            hist[f, b, 1] += h
            hist[f, b, 2] += 1.0
    return hist


@njit(cache=True)
def leaf_output(g, h, lambda_l2, max_delta_step):
    w = -g / (h + lambda_l2)
    if max_delta_step > 0.0:
        if w > max_delta_step:
            w = max_delta_step
        elif w < -max_delta_step:
            w = -max_delta_step
    return w


@njit(cache=True)
def leaf_score(g, h, lambda_l2, max_delta_step):
    # -(2 G w + (H + lambda) w^2); equals G^2 / (H + lambda) when w is unclipped
    w = leaf_output(g, h, lambda_l2, max_delta_step)
    return -(2.0 * g * w + (h + lambda_l2) * w * w)


@njit(cache=True)
def find_best_split(hist, n_bins_feature, feature_mask, lambda_l2, min_data, min_hess,
                    max_delta_step, min_gain):
    """Best (gain, feature, bin, G_total, H_total) over all allowed splits.

    Bins <= ``bin`` go left. Ties resolve to the lowest feature, then the
    lowest bin, because only strictly larger gains replace the incumbent.
    """
    n_features = hist.shape[0]
    best_gain = 0.0
    best_f = -1
    best_b = -1
    g_tot = 0.0
    h_tot = 0.0
    c_tot = 0.0
    for b in range(hist.shape[1]):
        g_tot += hist[0, b, 0]
        h_tot += hist[0, b, 1]
        c_tot += hist[0, b, 2]
    for f in range(n_features):
        if not feature_mask[f] or n_bins_feature[f] < 2:
            continue
        gf = 0.0
        hf = 0.0
        for b in range(n_bins_feature[f]):
            gf += hist[f, b, 0]
            hf += hist[f, b, 1]
        parent = leaf_score(gf, hf, lambda_l2, max_delta_step)
        gl = 0.0
        hl = 0.0
        cl = 0.0
        for b in range(n_bins_feature[f] - 1):
            gl += hist[f, b, 0]
            hl += hist[f, b, 1]
            cl += hist[f, b, 2]
            cr = c_tot - cl
            if cl < min_data or cr < min_data:
                continue
            hr = hf - hl
            if hl < min_hess or hr < min_hess:
                continue
            gr = gf - gl
            gain = 0.5 * (
                leaf_score(gl, hl, lambda_l2, max_delta_step)
                + leaf_score(gr, hr, lambda_l2, max_delta_step)
                - parent
            )
            if gain > best_gain and gain > min_gain:
                best_gain = gain
                best_f = f
                best_b = b
    return best_gain, best_f, best_b, g_tot, h_tot


@njit(cache=True)
def partition(bins, rows, feature, bin_threshold):
    n = rows.shape[0]
    left = np.empty(n, dtype=rows.dtype)
    right = np.empty(n, dtype=rows.dtype)
    nl = 0
    nr = 0
    for i in range(n):
        r = rows[i]
        if bins[r, feature] <= bin_threshold:
            left[nl] = r
            nl += 1
        else:
            right[nr] = r
            nr += 1
    return left[:nl].copy(), right[:nr].copy()


@njit(cache=True)
def predict_tree(x, feature, threshold, left, right, value):
    """Leaf value per row; ``not (x > t)`` sends NaN to the left child."""
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        node = 0
        while feature[node] >= 0:
            if x[i, feature[node]] > threshold[node]:
                node = right[node]
            else:
                node = left[node]
        out[i] = value[node]
    return out


@njit(cache=True)
def predict_forest(x, feature, threshold, left, right, value, roots, tree_class, n_classes):
    """Sum of leaf values per class over a concatenated forest (global node ids)."""
    out = np.zeros((x.shape[0], n_classes))
    for t in range(roots.shape[0]):
        k = tree_class[t]
        for i in range(x.shape[0]):
            node = roots[t]
            while feature[node] >= 0:
                if x[i, feature[node]] > threshold[node]:
                    node = right[node]
                else:
                    node = left[node]
            out[i, k] += value[node]
    return out


@njit(cache=True)
def scatter_add(target, rows, value):
    for i in range(rows.shape[0]):
        target[rows[i]] += value


@njit(cache=True)
def add_tree_binned(margin, k, bins, rows, feature, bin_threshold, left, right, value):
    """margin[r, k] += tree(bins[r]) for r in rows; exact twin of predict_tree.

    A row's bin is the number of edges strictly below it, so
    ``bin <= b`` holds exactly when ``x <= edges[b]``.
    """
    for j in range(rows.shape[0]):
        i = rows[j]
        node = 0
        while feature[node] >= 0:
            if bins[i, feature[node]] > bin_threshold[node]:
                node = right[node]
            else:
                node = left[node]
        margin[i, k] += value[node]


@njit(cache=True)
def focal_grad_hess(margin, y, gamma, alpha_t, p_clamp, hess_floor):
    """Row-fused version of objective.focal_grad_hess for 2-D batches."""
    n, k = margin.shape
    grad = np.empty((n, k))
    hess = np.empty((n, k))
    p = np.empty(k)
    for i in range(n):
        m = margin[i, 0]
        for c in range(1, k):
            if margin[i, c] > m:
                m = margin[i, c]
        s = 0.0
        for c in range(k):
            p[c] = np.exp(margin[i, c] - m)
            s += p[c]
        for c in range(k):
            p[c] /= s
        pt = min(max(p[y[i]], p_clamp), 1.0 - p_clamp)
        q = 1.0 - pt
        logp = np.log(pt)
        if gamma == 0.0:
            u = -1.0
            du = 0.0
        else:
            # one pow per row; q >= p_clamp keeps q**(gamma-2) finite
            q2 = q ** (gamma - 2.0)
            q1 = q2 * q
            u = gamma * q1 * pt * logp - q1 * q
            du = gamma * (q1 * (logp + 2.0) - (gamma - 1.0) * q2 * pt * logp)
        u *= alpha_t[i]
        du *= alpha_t[i]
        for c in range(k):
            d = (1.0 if c == y[i] else 0.0) - p[c]
            grad[i, c] = u * d
            h = du * pt * d * d - u * p[c] * (1.0 - p[c])
            hess[i, c] = h if h > hess_floor else hess_floor
    return grad, hess
