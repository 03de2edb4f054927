"""Synthetic families with known ground truth.

Each group draws from its own RNG substream keyed by ``(seed, group)``,
so a group's parameter and data never depend on ``m`` or on how groups
are distributed over workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import Dataset
from .errors import OutOfSupport

LOGGAMMA_SCALE = 0.4


@dataclass(frozen=True)
class SimConfig:
    family: str
    m: int
    n: int | tuple[int, ...]
    theta_mean: float = 0.0
    theta_sd: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.family not in ("laplace", "loggamma"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.m < 1 or self.theta_sd < 0:
            raise ValueError("need m >= 1 and theta_sd >= 0")
        if min(self.sizes) < 1:
            raise ValueError("group sizes must be >= 1")

    @property
    def sizes(self) -> tuple[int, ...]:
        if isinstance(self.n, int):
            return (self.n,) * self.m
        if len(self.n) != self.m:
            raise ValueError("per-group sizes must have length m")
        return tuple(self.n)


LAPLACE_STUDY = SimConfig("laplace", m=5000, n=100, theta_mean=0.0, theta_sd=0.1)
LOGGAMMA_STUDY = SimConfig("loggamma", m=100, n=5000, theta_mean=3.0, theta_sd=0.5)


def group_rng(seed: int, group: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(group,))))


def laplace_noise(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard Laplace draws by inverse CDF."""
    u = rng.random(size) - 0.5
    return -np.sign(u) * np.log1p(-2.0 * np.abs(u))


def gen_laplace(cfg: SimConfig) -> Dataset:
    if cfg.family != "laplace":
        raise ValueError("config is not a laplace study")
    groups, thetas = [], []
    for i, n in enumerate(cfg.sizes):
        rng = group_rng(cfg.seed, i)
        theta = cfg.theta_mean + cfg.theta_sd * rng.standard_normal()
        thetas.append(theta)
        groups.append(theta + laplace_noise(rng, n))
    return Dataset.from_groups(groups, theta=thetas)


def gen_loggamma(cfg: SimConfig) -> Dataset:
    if cfg.family != "loggamma":
        raise ValueError("config is not a loggamma study")
    groups, thetas = [], []
    for i, n in enumerate(cfg.sizes):
        rng = group_rng(cfg.seed, i)
        theta = cfg.theta_mean + cfg.theta_sd * rng.standard_normal()
        while theta <= 0:  # shape must be positive
            theta = cfg.theta_mean + cfg.theta_sd * rng.standard_normal()
        thetas.append(theta)
        groups.append(np.exp(rng.gamma(theta, LOGGAMMA_SCALE, size=n)))
    return Dataset.from_groups(groups, theta=thetas)


def generate(cfg: SimConfig) -> Dataset:
    return gen_laplace(cfg) if cfg.family == "laplace" else gen_loggamma(cfg)


def true_score(family: str, x):
    x = np.asarray(x, dtype=float)
    if family == "laplace":
        return np.sign(x)
    if family == "loggamma":
        if np.any(x <= 1):
            raise OutOfSupport("log-gamma support is x > 1")
        return 1.6 * np.log(np.log(x)) + 0.014
    raise ValueError(f"unknown family {family!r}")


def loggamma_mean(theta):
    """E[X] for shape ``theta``: the gamma MGF of log X at 1."""
    return (1.0 - LOGGAMMA_SCALE) ** (-np.asarray(theta, dtype=float))


def population_grid(cfg: SimConfig, nodes: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature grid ``(x, weights)`` for the pooled population law.

    The pooled law mixes the family over the theta distribution; the mixture
    is integrated with Gauss-Hermite nodes and x on a fine grid.
    """
    gh_x, gh_w = np.polynomial.hermite_e.hermegauss(nodes)
    thetas = cfg.theta_mean + cfg.theta_sd * gh_x
    tw = gh_w / gh_w.sum()
    if cfg.theta_sd == 0:
        thetas, tw = np.array([cfg.theta_mean]), np.array([1.0])
    if cfg.family == "laplace":
        x = np.linspace(-40.0, 40.0, 320001)
        dens = sum(w * 0.5 * np.exp(-np.abs(x - th)) for th, w in zip(thetas, tw))
    else:
        keep = thetas > 0
        thetas, tw = thetas[keep], tw[keep] / tw[keep].sum()
        g = np.linspace(1e-9, 45.0, 450001)
        dens_g = sum(w * stats.gamma.pdf(g, th, scale=LOGGAMMA_SCALE) for th, w in zip(thetas, tw))
        x, dens = np.exp(g), dens_g
    w = dens / dens.sum()
    return x, w
