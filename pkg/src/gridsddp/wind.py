"""Lag-p multivariate autoregressive wind model.

Output vectors evolve as mean + sum of lag terms + Gaussian innovation,
clamped componentwise to [0, capacity]. Simulation uses one RNG stream per
path derived from (seed, path index) so paths are reproducible regardless
of evaluation order. Discretization to a Markov chain (level grid plus
transition matrix) supports the DP baseline and is limited to lag-1 models.
"""

import os
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, SchemaError, UnsupportedLag

_PATH_STREAM = 0x57494E44  # namespace tag for per-path RNG streams


@dataclass(frozen=True)
class WindModel:
    p: int
    mu: np.ndarray          # (M,)
    phi: tuple              # p matrices, each (M, M)
    noise_sd: np.ndarray    # (M,)
    capacity: np.ndarray    # (M,)

    @property
    def n_farms(self):
        return self.mu.shape[0]

    def validate(self):
        errors = []
        M = self.n_farms
        if self.p != len(self.phi):
            errors.append(f"lag order {self.p} != number of Phi matrices {len(self.phi)}")
        for k, mat in enumerate(self.phi):
            if mat.shape != (M, M):
                errors.append(f"Phi_{k + 1} has shape {mat.shape}, expected ({M}, {M})")
        if self.noise_sd.shape != (M,) or self.capacity.shape != (M,):
            errors.append("noise_sd / capacity length mismatch")
        if np.any(self.noise_sd < 0):
            errors.append("negative innovation standard deviation")
        if np.any((self.mu < 0) | (self.mu > self.capacity)):
            errors.append("mean outside [0, capacity]")
        if not errors:
            rho = spectral_radius(self)
            if rho >= 1.0:
                errors.append(f"process not stationary (companion spectral radius {rho:.4f} >= 1)")
        return errors


def spectral_radius(model):
    """Largest eigenvalue magnitude of the lag-p companion matrix."""
    M, p = model.n_farms, model.p
    comp = np.zeros((M * p, M * p))
    for i, mat in enumerate(model.phi):
        comp[:M, i * M:(i + 1) * M] = mat
    if p > 1:
        comp[M:, :-M] = np.eye(M * (p - 1))
    return float(np.max(np.abs(np.linalg.eigvals(comp)))) if comp.size else 0.0


def step(model, history, noise):
    """One AR transition. history holds the last p wind vectors, newest first."""
    if len(history) != model.p:
        raise ValueError(f"history must hold exactly {model.p} vectors")
    w = model.mu.astype(float).copy()
    for i in range(model.p):
        w += model.phi[i] @ (np.asarray(history[i], dtype=float) - model.mu)
    w += np.asarray(noise, dtype=float)
    return np.clip(w, 0.0, model.capacity)


def simulate(model, history, T, count, seed):
    """count paths of length T, shaped (count, T, M); deterministic in seed.

    seed may be an int or a flat sequence of ints (stream namespacing).
    """
    if T < 1 or count < 1:
        raise ValueError("T and count must be >= 1")
    seed_key = [int(s) for s in (seed if isinstance(seed, (list, tuple)) else [seed])]
    M = model.n_farms
    out = np.empty((count, T, M))
    for l in range(count):
        rng = np.random.default_rng(seed_key + [_PATH_STREAM, l])
        hist = [np.asarray(h, dtype=float) for h in history]
        for t in range(T):
            eps = rng.normal(0.0, model.noise_sd, size=M)
            w = step(model, hist, eps)
            out[l, t] = w
            hist = [w] + hist[:-1]
    return out


def discretize(model, levels, samples, seed, burn_in=500):
    """Equiprobable level grid plus empirical transition matrix per farm.

    Farms are binned marginally: with more than one farm each gets its own
    grid and row-stochastic matrix. Requires a lag-1 model since the chain
    state is the previous output alone.
    """
    if model.p != 1:
        raise UnsupportedLag(f"discretize supports lag-1 models, got lag {model.p}")
    if levels < 2:
        raise ValueError("levels must be >= 2")
    M = model.n_farms
    path = simulate(model, [model.mu], burn_in + samples + 1, 1, seed)[0, burn_in:]

    grids = np.empty((M, levels))
    mats = []
    qs_mid = (2 * np.arange(levels) + 1) / (2 * levels)
    qs_edge = np.arange(1, levels) / levels
    for m in range(M):
        series = path[:, m]
        grids[m] = np.quantile(series, qs_mid)
        edges = np.quantile(series, qs_edge)
        bins = np.searchsorted(edges, series, side="right")
        counts = np.zeros((levels, levels))
        np.add.at(counts, (bins[:-1], bins[1:]), 1.0)
        rows = counts.sum(axis=1)
        mat = np.zeros_like(counts)
        for i in range(levels):
            if rows[i] > 0:
                mat[i] = counts[i] / rows[i]
            else:
                mat[i, i] = 1.0  # unreachable level: self-loop keeps rows stochastic
        mats.append(mat)
    return grids, mats


def level_index(grids, w):
    """Nearest level index per farm for a continuous wind vector."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    return np.array([int(np.argmin(np.abs(grids[m] - w[m]))) for m in range(grids.shape[0])])


# -- model file I/O ----------------------------------------------------------


def load_wind_model(path):
    if not os.path.exists(path):
        raise ParseError("wind model file not found", path=path)
    raw = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ParseError("entries use key = value", path=path, line=lineno)
            key, _, value = text.partition("=")
            raw[key.strip()] = (value.strip(), lineno)

    def need(key):
        if key not in raw:
            raise SchemaError(f"{path}: missing field {key!r}")
        return raw[key][0]

    try:
        p = int(need("p"))
        mu = np.array([float(v) for v in need("mu").split()])
        noise_sd = np.array([float(v) for v in need("noise_sd").split()])
        capacity = np.array([float(v) for v in need("capacity").split()])
        phi = []
        for k in range(1, p + 1):
            text = need(f"Phi_{k}")
            rows = [[float(v) for v in row.split()] for row in text.split(";")]
            phi.append(np.array(rows))
    except ValueError as exc:
        raise ParseError(f"bad numeric value ({exc})", path=path)

    model = WindModel(p=p, mu=mu, phi=tuple(phi), noise_sd=noise_sd, capacity=capacity)
    problems = model.validate()
    if problems:
        raise SchemaError(f"{path}: " + "; ".join(problems))
    return model


def save_wind_model(model, path):
    lines = [f"p = {model.p}",
             "mu = " + " ".join(repr(float(v)) for v in model.mu),
             "noise_sd = " + " ".join(repr(float(v)) for v in model.noise_sd),
             "capacity = " + " ".join(repr(float(v)) for v in model.capacity)]
    for k, mat in enumerate(model.phi, start=1):
        lines.append(f"Phi_{k} = " + " ; ".join(" ".join(repr(float(v)) for v in row)
                                                for row in mat))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def fit_lag1(data, capacity=None):
    """Least-squares lag-1 fit over a (T, M) history; fixture-building aid."""
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    T, M = data.shape
    if T < 3:
        raise ValueError("need at least 3 observations")
    mu = data.mean(axis=0)
    X = data[:-1] - mu
    Y = data[1:] - mu
    phi, *_ = np.linalg.lstsq(X, Y, rcond=None)
    phi = phi.T
    resid = Y - X @ phi.T
    noise_sd = resid.std(axis=0, ddof=1)
    if capacity is None:
        capacity = data.max(axis=0) * 1.05
    else:
        capacity = np.broadcast_to(np.asarray(capacity, dtype=float), (M,)).copy()
    mu = np.clip(mu, 0.0, capacity)
    return WindModel(p=1, mu=mu, phi=(phi,), noise_sd=noise_sd, capacity=capacity)


def read_wind_csv(path):
    """Historical wind CSV with header t,farm_1,...,farm_M."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "t":
            raise SchemaError(f"{path}: wind CSV header must start with 't'")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            try:
                rows.append([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise ParseError(f"bad wind value ({exc})", path=path, line=lineno)
    return np.array(rows)


def rescale_to_capacity_factor(series, capacity, capacity_factor):
    """Scale a wind series so its mean output is capacity * capacity_factor."""
    series = np.asarray(series, dtype=float)
    mean = series.mean(axis=0)
    if np.any(mean <= 0):
        raise ValueError("series mean must be positive to rescale")
    target = np.asarray(capacity, dtype=float) * capacity_factor
    return np.clip(series * (target / mean), 0.0, capacity)
