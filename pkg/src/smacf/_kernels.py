"""Numba inner loops for the SGD trainers.

These are deliberately sequential: the per-entry visit order is part of the
determinism contract, so no parallelization happens inside an epoch. Updates
use the pre-update row values on both sides (the classic simultaneous form:
the error term is computed once, then U's and V's rows move together).

Loss codes for the top-N kernel: 0 = squared error, 1 = log loss,
2 = exponential loss. The exponential argument is clamped at EXP_CLAMP to
keep early-training outliers finite; the clamp sits far outside the normal
operating range of binary-task predictions.
"""

import numpy as np
from numba import njit

EXP_CLAMP = 30.0

LOSS_MSE = 0
LOSS_LOG = 1
LOSS_EXP = 2


@njit(cache=True)
def rating_epoch(U, V, rows, cols, vals, weights, order, lr, mu1, mu2):
    """One weighted SGD pass over observed entries in the given order.

    Update per entry (i, j): e = r_ij - U_i.V_j, g = w_ij * e,
    U_i += lr*(g*V_j - mu1*U_i), V_j += lr*(g*U_i_old - mu2*V_j).
    Unit weights give the plain regularized-SVD update.
    """
    rank = U.shape[1]
    for t in range(order.shape[0]):
        idx = order[t]
        i = rows[idx]
        j = cols[idx]
        pred = 0.0
        for f in range(rank):
            pred += U[i, f] * V[j, f]
        g = weights[idx] * (vals[idx] - pred)
        for f in range(rank):
            uf = U[i, f]
            vf = V[j, f]
            U[i, f] = uf + lr * (g * vf - mu1 * uf)
            V[j, f] = vf + lr * (g * uf - mu2 * vf)


@njit(cache=True)
def topn_epoch(U, V, observed, selected, bonus, order, loss_code,
               w_pos, w_neg, lam0, lr, mu1, mu2):
    """One SGD pass over every cell of the m x n grid in the given order.

    ``observed`` marks the +1 cells (everything else is -1); ``selected``
    marks the current stability subset, whose cells get the extra weight
    ``bonus`` on top of ``lam0``. ``order`` holds flattened cell ids.
    """
    n = V.shape[0]
    rank = U.shape[1]
    for t in range(order.shape[0]):
        cell = order[t]
        i = cell // n
        j = cell % n
        r = 1.0 if observed[i, j] else -1.0
        pred = 0.0
        for f in range(rank):
            pred += U[i, f] * V[j, f]

        x = -pred * r
        if loss_code == LOSS_MSE:
            g = 2.0 * (pred - r)
        elif loss_code == LOSS_LOG:
            g = -r / (1.0 + np.exp(-x))
        else:
            if x > EXP_CLAMP:
                x = EXP_CLAMP
            g = -r * np.exp(x)

        w = (w_pos if r > 0.0 else w_neg) * (lam0 + selected[i, j] * bonus)
        step = -w * g
        for f in range(rank):
            uf = U[i, f]
            vf = V[j, f]
            U[i, f] = uf + lr * (step * vf - mu1 * uf)
            V[j, f] = vf + lr * (step * uf - mu2 * vf)
