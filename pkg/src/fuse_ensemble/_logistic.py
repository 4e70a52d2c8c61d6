"""Sample-weighted, ridge-penalized logistic regression by damped Newton."""

import numpy as np
from scipy.special import expit


def logistic_objective(theta, Z, y, s, reg):
    """Penalized negative log-likelihood; the last coefficient is an unpenalized intercept."""
    z = Z @ theta
    w = theta[:-1]
    return float(s @ np.logaddexp(0.0, -y * z) + reg * (w @ w))


def newton_logistic(X, y, sample_weight, reg, tol=1e-8, max_iter=100):
    """Minimize ``sum_i s_i log(1 + exp(-y_i (x_i w + c))) + reg ||w||^2``.

    Returns ``(weights, intercept, converged, n_iter)``.  The result is
    deterministic for given inputs.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    s = np.asarray(sample_weight, dtype=np.float64)
    n, m = X.shape
    Z = np.hstack([X, np.ones((n, 1))])
    penalty = np.full(m + 1, 2.0 * reg)
    penalty[-1] = 0.0
    theta = np.zeros(m + 1)
    f = logistic_objective(theta, Z, y, s, reg)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        z = Z @ theta
        grad = -Z.T @ (s * y * expit(-y * z)) + penalty * theta
        if np.linalg.norm(grad) <= tol:
            converged = True
            it -= 1
            break
        h = s * expit(z) * expit(-z)
        H = (Z * h[:, None]).T @ Z + np.diag(penalty)
        try:
            step = np.linalg.solve(H, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, -grad, rcond=None)[0]
        t, slope = 1.0, grad @ step
        while t > 1e-12:
            cand = theta + t * step
            f_c = logistic_objective(cand, Z, y, s, reg)
            if f_c <= f + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        theta, f = cand, f_c
    else:
        z = Z @ theta
        grad = -Z.T @ (s * y * expit(-y * z)) + penalty * theta
        converged = bool(np.linalg.norm(grad) <= tol)
    return theta[:-1], float(theta[-1]), converged, it
