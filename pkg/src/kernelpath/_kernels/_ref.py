"""NumPy reference backend for the spectral recursion.

Mathematically identical to the compiled kernel (same update order, same
running products); kept readable and fully vectorized over the modes.
Basis rows and f_rho values are precomputed in blocks so the per-step
work is a handful of length-N vector operations.
"""

import numpy as np

_BLOCK = 4096
_B2_SLACK = 1e-12  # matches online_learner.ITERATE_BOUND_SLACK


def _basis_block(xs_block, n_modes):
    k = np.arange(n_modes)
    phi = np.cos(np.pi * np.multiply.outer(xs_block, k))
    phi[:, 1:] *= np.sqrt(2.0)
    return phi


def _record(out, row, w, mu, c, Q, S, Cacc, r0, gamma, lam, track):
    err = w - c
    f_lam = c * mu / (mu + lam)
    rem = w - f_lam
    out[row, 0] = np.sqrt(err @ err)
    out[row, 1] = np.sqrt(err @ (err / mu))
    out[row, 2] = np.sqrt(rem @ rem)
    out[row, 3] = np.sqrt(rem @ (rem / mu))
    out[row, 4] = np.sqrt(w @ (w / mu))
    out[row, 5] = gamma
    out[row, 6] = lam
    if track:
        init = Q * r0
        approx = c - f_lam
        ident = rem - init + S
        out[row, 7] = np.sqrt(init @ init)
        out[row, 8] = np.sqrt(approx @ approx)
        out[row, 9] = np.sqrt(S @ S)
        out[row, 10] = np.sqrt(Cacc @ Cacc)
        out[row, 11] = np.sqrt(ident @ ident)
        out[row, 12] = np.sqrt(init @ (init / mu))
        out[row, 13] = np.sqrt(approx @ (approx / mu))
        out[row, 14] = np.sqrt(S @ (S / mu))
        out[row, 15] = np.sqrt(Cacc @ (Cacc / mu))
        out[row, 16] = np.sqrt(ident @ (ident / mu))


def run_spectral(
    mu,
    c,
    xs,
    noise,
    a,
    b,
    theta,
    t0,
    checkpoints,
    kappa,
    m_rho,
    track_decomp,
    check_b2,
):
    n_modes = mu.shape[0]
    T = xs.shape[0]
    n_cp = checkpoints.shape[0]

    out = np.full((n_cp, 17), np.nan)
    w = np.zeros(n_modes)
    lam0 = b * t0 ** (theta - 1.0)
    r0 = -c * mu / (mu + lam0)
    Q = np.ones(n_modes)
    S = np.zeros(n_modes)
    Cacc = np.zeros(n_modes)

    b2_violations = 0
    b2_min_margin = np.inf
    cp_idx = 0
    if n_cp and checkpoints[0] == 0:
        _record(out, 0, w, mu, c, Q, S, Cacc, r0, a * t0**-theta, lam0, track_decomp)
        cp_idx = 1

    lam_prev = lam0
    for start in range(0, T, _BLOCK):
        stop = min(start + _BLOCK, T)
        phi_block = _basis_block(xs[start:stop], n_modes)
        frho_block = phi_block @ c
        for i in range(stop - start):
            t = start + i + 1
            tbar = t + t0
            gamma = a * tbar**-theta
            lam = b * tbar ** (theta - 1.0)
            phi = phi_block[i]
            resid = float(w @ phi) - (frho_block[i] + noise[t - 1])
            if track_decomp:
                # accumulators use the pre-update iterate and this step's factors
                fac = 1.0 - gamma * (mu + lam)
                delta = c * mu * (lam_prev - lam) / ((mu + lam) * (mu + lam_prev))
                chi = mu * ((w - c) - resid * phi)
                Q *= fac
                S = fac * (S + delta)
                Cacc = fac * Cacc + gamma * chi
            w = (1.0 - gamma * lam) * w - (gamma * resid) * (mu * phi)
            if check_b2:
                bound = kappa * m_rho / lam
                margin = bound - np.sqrt(w @ (w / mu))
                if margin < b2_min_margin:
                    b2_min_margin = margin
                if margin < -_B2_SLACK * bound:
                    b2_violations += 1
            lam_prev = lam
            if cp_idx < n_cp and t == checkpoints[cp_idx]:
                _record(out, cp_idx, w, mu, c, Q, S, Cacc, r0, gamma, lam, track_decomp)
                cp_idx += 1

    if not check_b2:
        b2_min_margin = np.nan
    return out, w, b2_violations, float(b2_min_margin)
