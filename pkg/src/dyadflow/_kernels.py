"""Sequential per-node sweeps, compiled with numba.

Node effects couple through shared pairs, so these updates cannot be
vectorised across nodes.  All random numbers are drawn by the caller.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _clip(eta, bound):
    return min(max(eta, -bound), bound)


@njit(cache=True)
def _shifted_mu(eta, mu, shift, eshift, bound):
    """exp(clip(eta + shift)) reusing the cached mu = exp(clip(eta)) when no clamp is active."""
    e = eta + shift
    if -bound < e < bound and -bound < eta < bound:
        return mu * eshift
    return math.exp(_clip(e, bound))


@njit(cache=True)
def loglik_cached(y, eta, mu, bound):
    """Sum of y * clip(eta) - mu, dropping the log-factorial constant."""
    total = 0.0
    for r in range(y.shape[0]):
        total += y[r] * _clip(eta[r], bound) - mu[r]
    return total


@njit(cache=True)
def loglik_fill(y, eta, bound, mu_out):
    """Fill mu_out = exp(clip(eta)) and return the matching log-likelihood."""
    total = 0.0
    for r in range(y.shape[0]):
        e = _clip(eta[r], bound)
        m = math.exp(e)
        mu_out[r] = m
        total += y[r] * e - m
    return total


@njit(cache=True)
def srm_pair_mh(eta, mu, y, nu, p1, p2, l00, l10, l11, scales, z, logu, q11, q12, bound):
    """Joint random-walk MH on (nu_ij, nu_ji) for every dyad.

    Pairs are conditionally independent given everything else, so the order
    is irrelevant.  Returns the per-pair acceptance probabilities.
    """
    n_pairs = p1.shape[0]
    alpha = np.empty(n_pairs)
    for p in range(n_pairs):
        r1 = p1[p]
        r2 = p2[p]
        d1 = scales[p] * l00[p] * z[p, 0]
        d2 = scales[p] * (l10[p] * z[p, 0] + l11[p] * z[p, 1])
        m1 = _shifted_mu(eta[r1], mu[r1], d1, math.exp(d1), bound)
        m2 = _shifted_mu(eta[r2], mu[r2], d2, math.exp(d2), bound)
        delta = (y[r1] * (_clip(eta[r1] + d1, bound) - _clip(eta[r1], bound)) - (m1 - mu[r1])
                 + y[r2] * (_clip(eta[r2] + d2, bound) - _clip(eta[r2], bound)) - (m2 - mu[r2]))
        n1 = nu[r1]
        n2 = nu[r2]
        u1 = n1 + d1
        u2 = n2 + d2
        delta -= 0.5 * (q11 * (u1 * u1 + u2 * u2) + 2.0 * q12 * u1 * u2
                        - q11 * (n1 * n1 + n2 * n2) - 2.0 * q12 * n1 * n2)
        alpha[p] = math.exp(min(delta, 0.0))
        if logu[p] < delta:
            nu[r1] = u1
            nu[r2] = u2
            eta[r1] += d1
            eta[r2] += d2
            mu[r1] = m1
            mu[r2] = m2
    return alpha


@njit(cache=True)
def pair_moments(nu, p1, p2):
    """Sums of squares and cross-products of the dyad residual pairs."""
    s11 = 0.0
    s22 = 0.0
    s12 = 0.0
    for p in range(p1.shape[0]):
        u1 = nu[p1[p]]
        u2 = nu[p2[p]]
        s11 += u1 * u1
        s22 += u2 * u2
        s12 += u1 * u2
    return s11, s22, s12


@njit(cache=True)
def _pair_ratios(w, dlog_s, dlog_d):
    rs = math.exp(0.5 * (1.0 - w) * dlog_s)
    rd = math.exp(0.5 * (1.0 - w) * dlog_d)
    return 0.5 * (rs + rd), 0.5 * (rs - rd), rs, rd


@njit(cache=True)
def pair_scale_move(eta, mu, y, nu, p1, p2, w, dlog_s, dlog_d, lam_s, lam_d, lam_s1, lam_d1,
                    bound, mu1_out, mu2_out):
    """Log target ratio for rescaling each pair's sum/difference components.

    Pair p's components are multiplied by exp((1 - w[p]) / 2 * dlog), so
    w = 0 is a fully non-centred move and w = 1 leaves the pair alone.
    Returns likelihood + residual-prior + Jacobian terms; the proposed means
    go to mu1_out / mu2_out.
    """
    delta = 0.0
    for p in range(p1.shape[0]):
        i1 = p1[p]
        i2 = p2[p]
        u1 = nu[i1]
        u2 = nu[i2]
        hs, hd, rs, rd = _pair_ratios(w[p], dlog_s, dlog_d)
        n1 = hs * u1 + hd * u2
        n2 = hd * u1 + hs * u2
        e1 = _clip(eta[i1] + n1 - u1, bound)
        e2 = _clip(eta[i2] + n2 - u2, bound)
        m1 = math.exp(e1)
        m2 = math.exp(e2)
        mu1_out[p] = m1
        mu2_out[p] = m2
        delta += (y[i1] * (e1 - _clip(eta[i1], bound)) - (m1 - mu[i1])
                  + y[i2] * (e2 - _clip(eta[i2], bound)) - (m2 - mu[i2]))
        s0 = 0.5 * (u1 + u2) * (u1 + u2)
        d0 = 0.5 * (u1 - u2) * (u1 - u2)
        delta -= 0.5 * (s0 * rs * rs / lam_s1 - s0 / lam_s + d0 * rd * rd / lam_d1 - d0 / lam_d)
        delta += math.log(rs) + math.log(rd)
    n_pairs = p1.shape[0]
    delta -= 0.5 * n_pairs * (math.log(lam_s1 / lam_s) + math.log(lam_d1 / lam_d))
    return delta


@njit(cache=True)
def pair_scale_commit(eta, mu, nu, p1, p2, w, dlog_s, dlog_d, mu1, mu2):
    for p in range(p1.shape[0]):
        i1 = p1[p]
        i2 = p2[p]
        u1 = nu[i1]
        u2 = nu[i2]
        hs, hd, rs, rd = _pair_ratios(w[p], dlog_s, dlog_d)
        n1 = hs * u1 + hd * u2
        n2 = hd * u1 + hs * u2
        eta[i1] += n1 - u1
        eta[i2] += n2 - u2
        nu[i1] = n1
        nu[i2] = n2
        mu[i1] = mu1[p]
        mu[i2] = mu2[p]


@njit(cache=True)
def srm_node_mh(eta, mu, y, out_rows, in_rows, a, b, prec_ab, chol, scales, z, logu, bound):
    """Joint random-walk MH on (a_i, b_i), one node at a time.

    ``chol[i]`` is the lower Cholesky factor of the unit proposal covariance,
    ``prec_ab`` the prior precision of (a_i, b_i).  Updates eta, mu, a, b in
    place and returns the per-node acceptance probabilities.
    """
    n = a.shape[0]
    m = out_rows.shape[1]
    alpha = np.empty(n)
    new_out = np.empty(m)
    new_in = np.empty(m)
    for i in range(n):
        da = scales[i] * chol[i, 0, 0] * z[i, 0]
        db = scales[i] * (chol[i, 1, 0] * z[i, 0] + chol[i, 1, 1] * z[i, 1])
        ea = math.exp(da)
        eb = math.exp(db)
        delta = 0.0
        for k in range(m):
            r = out_rows[i, k]
            new_out[k] = _shifted_mu(eta[r], mu[r], da, ea, bound)
            delta += y[r] * (_clip(eta[r] + da, bound) - _clip(eta[r], bound)) - (new_out[k] - mu[r])
            r = in_rows[i, k]
            new_in[k] = _shifted_mu(eta[r], mu[r], db, eb, bound)
            delta += y[r] * (_clip(eta[r] + db, bound) - _clip(eta[r], bound)) - (new_in[k] - mu[r])
        a0, b0 = a[i], b[i]
        a1, b1 = a0 + da, b0 + db
        old = prec_ab[0, 0] * a0 * a0 + 2 * prec_ab[0, 1] * a0 * b0 + prec_ab[1, 1] * b0 * b0
        new = prec_ab[0, 0] * a1 * a1 + 2 * prec_ab[0, 1] * a1 * b1 + prec_ab[1, 1] * b1 * b1
        delta -= 0.5 * (new - old)
        alpha[i] = math.exp(min(delta, 0.0))
        if logu[i] < delta:
            a[i], b[i] = a1, b1
            for k in range(m):
                r = out_rows[i, k]
                eta[r] += da
                mu[r] = new_out[k]
                r = in_rows[i, k]
                eta[r] += db
                mu[r] = new_in[k]
    return alpha


@njit(cache=True)
def srm_node_centered(nu, out_rows, in_rows, a, b, prec_nu, prec_ab, z):
    """Gibbs draw of (a_i, b_i) holding the linear predictor fixed.

    With eta fixed, nu_ij + a_i and nu_ji + b_i are constant, so (a_i, b_i)
    has a bivariate normal full conditional from the pair prior on nu and the
    node prior.  ``in_rows[i][k]`` must be the reverse row of ``out_rows[i][k]``.
    """
    n = a.shape[0]
    m = out_rows.shape[1]
    p00 = m * prec_nu[0, 0] + prec_ab[0, 0]
    p01 = m * prec_nu[0, 1] + prec_ab[0, 1]
    p11 = m * prec_nu[1, 1] + prec_ab[1, 1]
    det = p00 * p11 - p01 * p01
    c00, c01, c11 = p11 / det, -p01 / det, p00 / det
    l00 = math.sqrt(c00)
    l10 = c01 / l00
    l11 = math.sqrt(c11 - l10 * l10)
    for i in range(n):
        s0 = 0.0
        s1 = 0.0
        for k in range(m):
            s0 += nu[out_rows[i, k]] + a[i]
            s1 += nu[in_rows[i, k]] + b[i]
        h0 = prec_nu[0, 0] * s0 + prec_nu[0, 1] * s1
        h1 = prec_nu[1, 0] * s0 + prec_nu[1, 1] * s1
        mean0 = c00 * h0 + c01 * h1
        mean1 = c01 * h0 + c11 * h1
        a1 = mean0 + l00 * z[i, 0]
        b1 = mean1 + l10 * z[i, 0] + l11 * z[i, 1]
        da, db = a1 - a[i], b1 - b[i]
        for k in range(m):
            nu[out_rows[i, k]] -= da
            nu[in_rows[i, k]] -= db
        a[i], b[i] = a1, b1


@njit(cache=True)
def sym_node_mh(eta, mu, y, node_pairs, u, prec_u, scales, z, logu, bound):
    """Scalar random-walk MH on node effects u_i for a symmetric pair model.

    ``node_pairs[i]`` lists the pair indices touching node i; each pair's
    predictor carries u_i + u_j.  Returns acceptance probabilities.
    """
    n = u.shape[0]
    m = node_pairs.shape[1]
    alpha = np.empty(n)
    new_mu = np.empty(m)
    for i in range(n):
        d = scales[i] * z[i]
        ed = math.exp(d)
        delta = 0.0
        for k in range(m):
            p = node_pairs[i, k]
            new_mu[k] = _shifted_mu(eta[p], mu[p], d, ed, bound)
            delta += y[p] * (_clip(eta[p] + d, bound) - _clip(eta[p], bound)) - (new_mu[k] - mu[p])
        u1 = u[i] + d
        delta -= 0.5 * prec_u * (u1 * u1 - u[i] * u[i])
        alpha[i] = math.exp(min(delta, 0.0))
        if logu[i] < delta:
            u[i] = u1
            for k in range(m):
                p = node_pairs[i, k]
                eta[p] += d
                mu[p] = new_mu[k]
    return alpha


@njit(cache=True)
def sym_pair_mh(eta, mu, y, eps, scales, z, logu, prec_eps, bound):
    """Scalar random-walk MH on the pair residuals of a symmetric model."""
    n_pairs = y.shape[0]
    alpha = np.empty(n_pairs)
    for p in range(n_pairs):
        d = scales[p] * z[p]
        m1 = _shifted_mu(eta[p], mu[p], d, math.exp(d), bound)
        e1 = eps[p] + d
        delta = (y[p] * (_clip(eta[p] + d, bound) - _clip(eta[p], bound)) - (m1 - mu[p])
                 - 0.5 * prec_eps * (e1 * e1 - eps[p] * eps[p]))
        alpha[p] = math.exp(min(delta, 0.0))
        if logu[p] < delta:
            eps[p] = e1
            eta[p] += d
            mu[p] = m1
    return alpha


@njit(cache=True)
def sym_node_centered(eps, node_pairs, u, prec_eps, prec_u, z):
    """Gibbs draw of u_i holding the pair predictors fixed (eps_p + u_i constant)."""
    n = u.shape[0]
    m = node_pairs.shape[1]
    prec = m * prec_eps + prec_u
    sd = 1.0 / math.sqrt(prec)
    for i in range(n):
        s = 0.0
        for p in node_pairs[i]:
            s += eps[p] + u[i]
        u1 = prec_eps * s / prec + sd * z[i]
        d = u1 - u[i]
        for p in node_pairs[i]:
            eps[p] -= d
        u[i] = u1
