"""Cumulative link functions (logit, probit, cloglog).

Each link supplies the CDF F, its density f, the density derivative f' (needed
for Newton steps), and the inverse CDF (needed for intercept initialization and
simulation). Arguments are clipped to +-35 before exponentials so likelihood
evaluations stay finite during line searches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ValidationError

_CLIP = 35.0
_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class LinkFunction:
    name: str
    cdf: Callable[[np.ndarray], np.ndarray]
    pdf: Callable[[np.ndarray], np.ndarray]
    dpdf: Callable[[np.ndarray], np.ndarray]  # derivative of pdf
    inverse: Callable[[np.ndarray], np.ndarray]


def _logit_cdf(z):
    z = np.clip(z, -_CLIP, _CLIP)
    return 1.0 / (1.0 + np.exp(-z))


def _logit_pdf(z):
    p = _logit_cdf(z)
    return p * (1.0 - p)


def _logit_dpdf(z):
    p = _logit_cdf(z)
    return p * (1.0 - p) * (1.0 - 2.0 * p)


def _logit_inv(p):
    p = np.asarray(p, dtype=float)
    return np.log(p / (1.0 - p))


def _probit_pdf(z):
    z = np.clip(z, -_CLIP, _CLIP)
    return np.exp(-0.5 * z * z) / _SQRT_2PI


def _probit_dpdf(z):
    z = np.clip(z, -_CLIP, _CLIP)
    return -z * np.exp(-0.5 * z * z) / _SQRT_2PI


def _cloglog_cdf(z):
    z = np.clip(z, -_CLIP, _CLIP)
    return 1.0 - np.exp(-np.exp(z))


def _cloglog_pdf(z):
    z = np.clip(z, -_CLIP, _CLIP)
    return np.exp(z - np.exp(z))


def _cloglog_dpdf(z):
    z = np.clip(z, -_CLIP, _CLIP)
    return np.exp(z - np.exp(z)) * (1.0 - np.exp(z))


def _cloglog_inv(p):
    p = np.asarray(p, dtype=float)
    return np.log(-np.log(1.0 - p))


_LINKS = {
    "logit": LinkFunction("logit", _logit_cdf, _logit_pdf, _logit_dpdf, _logit_inv),
    "probit": LinkFunction("probit", lambda z: ndtr(np.clip(z, -_CLIP, _CLIP)),
                           _probit_pdf, _probit_dpdf, ndtri),
    "cloglog": LinkFunction("cloglog", _cloglog_cdf, _cloglog_pdf, _cloglog_dpdf,
                            _cloglog_inv),
}


def get_link(name: str) -> LinkFunction:
    try:
        return _LINKS[name]
    except KeyError:
        raise ValidationError(
            f"unknown link {name!r}; expected one of {sorted(_LINKS)}") from None
