"""Moment estimators, conservative covariance, and Wald-type inference.

The moment route estimates cell means Yhat and the diagonal covariance
Vhat = diag(Shat(z,z)/N_z); effects and their covariance follow by the
contrast matrix.  Confidence intervals use exact Normal quantiles (the
design-based guarantees are asymptotic, so no t correction is applied).
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .contrasts import contrast_matrix
from .core import cell_summary, enumerate_subsets
from .errors import IdentityViolationError

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class MomentEstimates:
    """Cell means and the diagonal of the conservative covariance estimator."""

    y_hat: np.ndarray  # (Q,)
    v_hat: np.ndarray  # (Q,) diagonal entries Shat(z,z)/N_z
    counts: np.ndarray  # (Q,)

    @property
    def v_hat_matrix(self):
        return np.diag(self.v_hat)


def moment_estimates(data):
    """Yhat and Vhat from the observed data; requires N_z >= 2 per cell."""
    summary = cell_summary(data, variances=True)
    return MomentEstimates(
        summary.means, summary.variances / summary.counts, summary.counts
    )


@dataclass(frozen=True)
class InferenceReport:
    """Effect estimates with covariance, Wald intervals, and z statistics."""

    subsets: tuple
    labels: tuple
    estimate: np.ndarray
    covariance: np.ndarray
    alpha: float

    @property
    def se(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def z_stat(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.estimate / self.se

    @property
    def ci_half_width(self):
        return stats.norm.ppf(1.0 - self.alpha / 2.0) * self.se

    @property
    def ci_low(self):
        return self.estimate - self.ci_half_width

    @property
    def ci_high(self):
        return self.estimate + self.ci_half_width

    def joint_test(self, labels=None):
        """Wald chi-square test that the selected effects are all zero.

        Uses the pseudoinverse of the covariance block with rank determined
        by a relative eigenvalue cutoff, since the covariance can be
        singular for degenerate weighting schemes.
        """
        if labels is None:
            idx = list(range(len(self.labels)))
        else:
            idx = [self.labels.index(lb) for lb in labels]
        est = self.estimate[idx]
        cov = self.covariance[np.ix_(idx, idx)]
        eigval, eigvec = np.linalg.eigh(cov)
        cutoff = RANK_RTOL * max(eigval.max(), 0.0)
        keep = eigval > cutoff
        rank = int(keep.sum())
        if rank == 0:
            return {"statistic": 0.0, "df": 0, "p_value": 1.0}
        inv = (eigvec[:, keep] / eigval[keep]) @ eigvec[:, keep].T
        statistic = float(est @ inv @ est)
        return {
            "statistic": statistic,
            "df": rank,
            "p_value": float(stats.chi2.sf(statistic, rank)),
        }

    def to_dict(self):
        effects = {
            label: {
                "estimate": float(self.estimate[i]),
                "se": float(self.se[i]),
                "ci_low": float(self.ci_low[i]),
                "ci_high": float(self.ci_high[i]),
                "z": float(self.z_stat[i]),
            }
            for i, label in enumerate(self.labels)
        }
        return {
            "alpha": self.alpha,
            "effects": effects,
            "covariance": self.covariance.tolist(),
        }


def effect_estimates(data, scheme, alpha=0.05):
    """Moment estimator of the general effects with Wald-type inference."""
    est = moment_estimates(data)
    K = data.spec.K
    G = contrast_matrix(scheme, K).matrix
    tau = G @ est.y_hat
    cov = (G * est.v_hat) @ G.T
    subsets = tuple(enumerate_subsets(K))
    labels = tuple(data.spec.subset_label(s) for s in subsets)
    return InferenceReport(subsets, labels, tau, cov, alpha)


def treatment_based_fit(data, check_tol=1e-8):
    """OLS of Y on the Q cell indicators without intercept, with HC0.

    Numerically this reproduces the moment route: the coefficients equal
    the cell means and the HC0 covariance equals diag(1 - 1/N_z) Vhat.
    Both identities are asserted; a violation signals an implementation
    bug.
    """
    est = moment_estimates(data)
    Q = data.spec.Q
    X = np.zeros((data.N, Q))
    X[np.arange(data.N), data.cell] = 1.0
    beta, *_ = np.linalg.lstsq(X, data.outcome, rcond=None)
    resid = data.outcome - X @ beta
    xtx_inv = np.diag(1.0 / est.counts.astype(np.float64))
    meat = X.T @ (X * (resid ** 2)[:, None])
    v0 = xtx_inv @ meat @ xtx_inv

    expected_v0 = np.diag((1.0 - 1.0 / est.counts) * est.v_hat)
    scale = max(np.abs(est.y_hat).max(), 1.0)
    if np.abs(beta - est.y_hat).max() > check_tol * scale:
        raise IdentityViolationError("treatment-based coefficients != cell means")
    vscale = max(np.abs(expected_v0).max(), 1e-12)
    if np.abs(v0 - expected_v0).max() > check_tol * vscale:
        raise IdentityViolationError("treatment-based HC0 != diag(1-1/N_z) Vhat")
    return beta, v0
