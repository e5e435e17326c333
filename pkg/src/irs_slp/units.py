"""Power/gain unit conversions.  All internal math is linear watts; dBm and
dB appear only at the configuration and reporting boundaries."""

from __future__ import annotations

import numpy as np


def dbm_to_watts(p_dbm):
    return 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0) * 1e-3


def watts_to_dbm(p_watts):
    return 10.0 * np.log10(np.asarray(p_watts, dtype=float) * 1e3)


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))
